//! Bundled analytic fixtures used throughout the test suites and examples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AnalyticJacobians, DaeModel, Equilibrium, SmallSignalModel};
use crate::linalg;

/// Scalar test equation x' = lambda x (no algebraic variables).
pub fn scalar_test_equation(lambda: f64) -> DaeModel {
    DaeModel::new(
        1,
        0,
        move |x, _| DVector::from_vec(vec![lambda * x[0]]),
        |_, _| DVector::zeros(0),
    )
    .with_jacobians(AnalyticJacobians {
        fx: Box::new(move |_, _| DMatrix::from_row_slice(1, 1, &[lambda])),
        fy: Box::new(|_, _| DMatrix::zeros(1, 0)),
        gx: Box::new(|_, _| DMatrix::zeros(0, 1)),
        gy: Box::new(|_, _| DMatrix::zeros(0, 0)),
    })
}

/// Jacobian blocks of [`scalar_test_equation`].
pub fn scalar_test_ssm(lambda: f64) -> SmallSignalModel {
    SmallSignalModel::new(
        DMatrix::from_row_slice(1, 1, &[lambda]),
        DMatrix::zeros(1, 0),
        DMatrix::zeros(0, 1),
        DMatrix::zeros(0, 0),
    )
    .expect("scalar test blocks are consistent")
}

/// Scalar DAE x' = a x + b y, 0 = c x + d y.
pub fn scalar_dae(a: f64, b: f64, c: f64, d: f64) -> DaeModel {
    DaeModel::linear(&scalar_dae_ssm(a, b, c, d))
}

/// Jacobian blocks of [`scalar_dae`].
pub fn scalar_dae_ssm(a: f64, b: f64, c: f64, d: f64) -> SmallSignalModel {
    SmallSignalModel::new(
        DMatrix::from_row_slice(1, 1, &[a]),
        DMatrix::from_row_slice(1, 1, &[b]),
        DMatrix::from_row_slice(1, 1, &[c]),
        DMatrix::from_row_slice(1, 1, &[d]),
    )
    .expect("scalar DAE blocks are consistent")
}

/// The default scalar-DAE parameter set (a, b, c, d) = (-2, 1, 1, -1),
/// whose reduced state matrix is the scalar -1.
pub fn scalar_dae_default() -> DaeModel {
    scalar_dae(-2.0, 1.0, 1.0, -1.0)
}

/// Blocks of [`scalar_dae_default`].
pub fn scalar_dae_default_ssm() -> SmallSignalModel {
    scalar_dae_ssm(-2.0, 1.0, 1.0, -1.0)
}

// Classical machine constants: rotor angle / speed / mechanical power states
// against one algebraic electrical-power variable.
const OMEGA_B: f64 = 120.0 * std::f64::consts::PI;
const INERTIA_2H: f64 = 7.0;
const DAMPING: f64 = 2.0;
const GOV_T: f64 = 0.5;
const GOV_DROOP: f64 = 0.05;
const P_REF: f64 = 0.6;
const E_OVER_X: f64 = 3.5; // E V / X

/// Three-state classical machine behind a reactance with a turbine-governor
/// lag and the electrical power kept as an explicit algebraic variable:
///
/// ```text
/// delta' = omega_b (omega - 1)
/// omega' = (p_m - p_e - D (omega - 1)) / 2H
/// p_m'   = (p_ref - p_m - (omega - 1)/R) / T
/// 0      = p_e - (E V / X) sin(delta)
/// ```
pub fn classical_machine() -> DaeModel {
    DaeModel::new(
        3,
        1,
        |x, y| {
            let (delta, omega, pm) = (x[0], x[1], x[2]);
            let pe = y[0];
            let _ = delta;
            DVector::from_vec(vec![
                OMEGA_B * (omega - 1.0),
                (pm - pe - DAMPING * (omega - 1.0)) / INERTIA_2H,
                (P_REF - pm - (omega - 1.0) / GOV_DROOP) / GOV_T,
            ])
        },
        |x, y| DVector::from_vec(vec![y[0] - E_OVER_X * x[0].sin()]),
    )
    .with_jacobians(AnalyticJacobians {
        fx: Box::new(|_, _| {
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    OMEGA_B,
                    0.0,
                    0.0,
                    -DAMPING / INERTIA_2H,
                    1.0 / INERTIA_2H,
                    0.0,
                    -1.0 / (GOV_DROOP * GOV_T),
                    -1.0 / GOV_T,
                ],
            )
        }),
        fy: Box::new(|_, _| DMatrix::from_row_slice(3, 1, &[0.0, -1.0 / INERTIA_2H, 0.0])),
        gx: Box::new(|x, _| DMatrix::from_row_slice(1, 3, &[-E_OVER_X * x[0].cos(), 0.0, 0.0])),
        gy: Box::new(|_, _| DMatrix::from_row_slice(1, 1, &[1.0])),
    })
}

/// Hand-solved equilibrium of [`classical_machine`].
pub fn classical_machine_equilibrium() -> Equilibrium {
    let delta0 = (P_REF / E_OVER_X).asin();
    Equilibrium {
        x0: DVector::from_vec(vec![delta0, 1.0, P_REF]),
        y0: DVector::from_vec(vec![P_REF]),
        residual_norm: 0.0,
    }
}

/// Deterministic random linear fixture with a well-conditioned g_y.
///
/// Entries are uniform in [-1, 1]; g_y gets a diagonal shift until its
/// condition number drops below `max_cond_gy`. The same seed always yields
/// the same blocks.
pub fn random_ssm(seed: u64, nu: usize, mu: usize, max_cond_gy: f64) -> SmallSignalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
    };
    let fx = mat(nu, nu) - 1.5 * DMatrix::identity(nu, nu);
    let fy = mat(nu, mu);
    let gx = mat(mu, nu);
    let mut gy = mat(mu, mu);
    let mut shift = 1.5;
    while mu > 0 && linalg::cond(&gy) > max_cond_gy {
        gy += shift * DMatrix::identity(mu, mu);
        shift *= 2.0;
    }
    SmallSignalModel::new(fx, fy, gx, gy).expect("generated blocks are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{find_equilibrium, JacobianMode};

    #[test]
    fn machine_equilibrium_has_zero_residual() {
        let model = classical_machine();
        let eq = classical_machine_equilibrium();
        assert!(model.residual_norm(&eq.x0, &eq.y0).unwrap() <= 1e-14);
    }

    #[test]
    fn machine_equilibrium_found_from_rough_guess() {
        let model = classical_machine();
        let eq = find_equilibrium(
            &model,
            &DVector::from_vec(vec![0.3, 1.01, 0.5]),
            &DVector::from_vec(vec![0.5]),
            1e-12,
            50,
        )
        .unwrap();
        let expected = classical_machine_equilibrium();
        assert!((eq.x0 - expected.x0).amax() <= 1e-10);
        assert!((eq.y0 - expected.y0).amax() <= 1e-10);
    }

    #[test]
    fn machine_linearization_is_finite_and_consistent() {
        let model = classical_machine();
        let eq = classical_machine_equilibrium();
        let ssm = crate::model::linearize(&model, &eq, JacobianMode::Analytic, None).unwrap();
        assert_eq!(ssm.nu(), 3);
        assert_eq!(ssm.mu(), 1);
        assert!(ssm.state_matrix().is_ok());
    }

    #[test]
    fn random_ssm_is_reproducible_and_conditioned() {
        let a = random_ssm(42, 4, 3, 1e3);
        let b = random_ssm(42, 4, 3, 1e3);
        assert_eq!(a, b);
        assert!(linalg::cond(a.gy()) < 1e3);
    }
}
