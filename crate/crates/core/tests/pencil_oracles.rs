//! Cross-checks between the pencil constructions, the exact one-step
//! update map and the time-domain integrators.

mod common;

use common::{max_rel_mismatch, nonzero_eigenvalues};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use penstab::model::fixtures;
use penstab::pencils::{self, Interfacing, PcScheme, PencilForm};
use penstab::simulator::{self, IntegrationScheme, SimConfig};
use penstab::{linalg, spectra, SmallSignalModel};

fn random_fixture(seed: u64) -> SmallSignalModel {
    let nu = 1 + (seed % 5) as usize;
    let mu = (seed % 6) as usize;
    fixtures::random_ssm(seed, nu, mu, 100.0)
}

/// Scalar Heun growth: the dense pencil eigenvalue must reproduce
/// 1 + h*lambda*sum_{j<=r} (h*lambda/2)^j for every (h, r).
#[test]
fn heun_growth_function_identity() {
    for lambda in [-0.5, -2.0, -7.5] {
        let ssm = fixtures::scalar_test_ssm(lambda);
        for h in [1e-3, 1e-2, 1e-1, 0.4] {
            for r in 0..=5usize {
                let pencil =
                    pencils::pencil_pc_extrapolation(&ssm, h, r, PencilForm::Dense).unwrap();
                let got = pencil.a()[(0, 0)];
                let zbar = h * lambda;
                let c: f64 = (0..=r).map(|j| (0.5 * zbar).powi(j as i32)).sum();
                let expected = 1.0 + zbar * c;
                assert!(
                    (got - expected).abs() <= 1e-12,
                    "lambda={lambda} h={h} r={r}: {got} vs {expected}"
                );
            }
        }
    }
}

/// The one-step update matrix and both pencil forms agree on the finite
/// spectrum across 100 seeded random fixtures, and the sparse forms carry
/// exactly mu non-dynamic eigenvalues.
#[test]
fn step_map_and_pencils_agree_on_random_fixtures() {
    let h = 0.05;
    let r = 2;
    for seed in 0..100u64 {
        let ssm = random_fixture(seed);
        for interfacing in [Interfacing::Extrapolation, Interfacing::Perfect] {
            let t = pencils::hm_step_map(&ssm, h, r, interfacing).unwrap();
            let map_eigs = nonzero_eigenvalues(&t);
            assert_eq!(map_eigs.len(), ssm.nu(), "seed {seed}: zero filtering");

            let build = |form| match interfacing {
                Interfacing::Extrapolation => {
                    pencils::pencil_pc_extrapolation(&ssm, h, r, form).unwrap()
                }
                Interfacing::Perfect => pencils::pencil_pc_perfect(&ssm, h, r, form).unwrap(),
            };
            let sparse = spectra::pencil_spectrum(&build(PencilForm::Sparse)).unwrap();
            let dense = spectra::pencil_spectrum(&build(PencilForm::Dense)).unwrap();

            assert_eq!(
                sparse.infinite_multiplicity(),
                ssm.mu(),
                "seed {seed} {interfacing:?}: sparse zero count"
            );
            assert_eq!(dense.infinite_multiplicity(), 0);
            assert_eq!(sparse.eigenvalues().len(), ssm.nu());
            assert_eq!(dense.eigenvalues().len(), ssm.nu());

            let worst_sd = max_rel_mismatch(sparse.eigenvalues(), dense.eigenvalues());
            assert!(
                worst_sd <= 1e-8,
                "seed {seed} {interfacing:?}: sparse/dense mismatch {worst_sd:.3e}"
            );
            let worst_map = max_rel_mismatch(&map_eigs, sparse.eigenvalues());
            assert!(
                worst_map <= 1e-8,
                "seed {seed} {interfacing:?}: map/pencil mismatch {worst_map:.3e}"
            );
        }
    }
}

/// A single integrator step around the equilibrium equals the linear map.
#[test]
fn simulator_step_equals_step_map_on_random_fixtures() {
    let h = 1e-3;
    let r = 2;
    for seed in 0..100u64 {
        let ssm = random_fixture(seed);
        let model = penstab::DaeModel::linear(&ssm);
        let x0 = DVector::from_fn(ssm.nu(), |i, _| 0.1 + 0.03 * (i as f64) - 0.05 * ((seed % 7) as f64) / 7.0);
        let y0 = if ssm.mu() == 0 {
            DVector::zeros(0)
        } else {
            linalg::solve_vec_checked(ssm.gy(), &(-(ssm.gx() * &x0)), 1e-14, |rc| {
                penstab::Error::SingularAlgebraicJacobian { rcond: rc }
            })
            .unwrap()
        };
        for interfacing in [Interfacing::Extrapolation, Interfacing::Perfect] {
            let cfg = SimConfig::new(
                h,
                h,
                IntegrationScheme::Pc(PcScheme::heun(r, interfacing)),
            )
            .unwrap()
            .with_interface_tol(1e-14)
            .with_newton(1e-13, 100);
            let traj = simulator::simulate_psa_hm(&model, &x0, &y0, &cfg).unwrap();
            let t = pencils::hm_step_map(&ssm, h, r, interfacing).unwrap();
            let mut u0 = DVector::zeros(ssm.nu() + ssm.mu());
            u0.rows_mut(0, ssm.nu()).copy_from(&x0);
            u0.rows_mut(ssm.nu(), ssm.mu()).copy_from(&y0);
            let u1 = &t * &u0;
            let scale = 1.0 + u1.amax();
            for i in 0..ssm.nu() {
                assert!(
                    (traj.states[1][i] - u1[i]).abs() <= 1e-12 * scale,
                    "seed {seed} {interfacing:?} state {i}"
                );
            }
            for j in 0..ssm.mu() {
                assert!(
                    (traj.algebraics[1][j] - u1[ssm.nu() + j]).abs() <= 1e-12 * scale,
                    "seed {seed} {interfacing:?} algebraic {j}"
                );
            }
        }
    }
}

/// Decoupling f_y = 0 (or g_x = 0) makes the interfacing strategy
/// irrelevant.
#[test]
fn interfacing_equivalence_when_decoupled() {
    let base = fixtures::random_ssm(7, 3, 2, 100.0);
    let fy_zero = SmallSignalModel::new(
        base.fx().clone(),
        DMatrix::zeros(3, 2),
        base.gx().clone(),
        base.gy().clone(),
    )
    .unwrap();
    let gx_zero = SmallSignalModel::new(
        base.fx().clone(),
        base.fy().clone(),
        DMatrix::zeros(2, 3),
        base.gy().clone(),
    )
    .unwrap();
    for ssm in [fy_zero, gx_zero] {
        for form in [PencilForm::Sparse, PencilForm::Dense] {
            let ext = spectra::pencil_spectrum(
                &pencils::pencil_pc_extrapolation(&ssm, 0.02, 2, form).unwrap(),
            )
            .unwrap();
            let per = spectra::pencil_spectrum(
                &pencils::pencil_pc_perfect(&ssm, 0.02, 2, form).unwrap(),
            )
            .unwrap();
            let worst = max_rel_mismatch(ext.eigenvalues(), per.eigenvalues());
            assert!(worst <= 1e-10, "{form:?}: {worst:.3e}");
        }
    }
}

/// Fitting the per-step amplification of a long run recovers the dominant
/// pencil eigenvalue.
#[test]
fn empirical_amplification_matches_pencil() {
    let ssm = fixtures::scalar_dae_default_ssm();
    let model = penstab::DaeModel::linear(&ssm);
    let h = 0.1;
    let cfg = SimConfig::new(
        h,
        500.0 * h,
        IntegrationScheme::Pc(PcScheme::heun(1, Interfacing::Extrapolation)),
    )
    .unwrap();
    let x0 = DVector::from_vec(vec![1.0]);
    let y0 = DVector::from_vec(vec![1.0]);
    let traj = simulator::simulate_psa_hm(&model, &x0, &y0, &cfg).unwrap();
    assert_eq!(traj.states.len(), 501);
    // Fit while the amplitude is far above the algebraic solver's
    // tolerance floor, where the decay visibly stalls.
    let ratio = traj.states[100][0] / traj.states[99][0];

    let pencil = pencils::pencil_pc_extrapolation(&ssm, h, 1, PencilForm::Dense).unwrap();
    let spec = spectra::pencil_spectrum(&pencil).unwrap();
    let dominant = spec
        .eigenvalues()
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    assert!(
        (ratio - dominant.re).abs() <= 1e-6,
        "ratio {ratio} vs dominant {dominant}"
    );
}

/// The converged perfect-interfacing step reproduces the perfect pencil's
/// step map, not just the extrapolated one.
#[test]
fn perfect_interfacing_converges_to_its_pencil() {
    let ssm = fixtures::random_ssm(11, 2, 2, 50.0);
    let model = penstab::DaeModel::linear(&ssm);
    let h = 0.01;
    let x0 = DVector::from_vec(vec![0.2, -0.1]);
    let y0 = linalg::solve_vec_checked(ssm.gy(), &(-(ssm.gx() * &x0)), 1e-14, |rc| {
        penstab::Error::SingularAlgebraicJacobian { rcond: rc }
    })
    .unwrap();
    let cfg = SimConfig::new(
        h,
        h,
        IntegrationScheme::Pc(PcScheme::heun(1, Interfacing::Perfect)),
    )
    .unwrap()
    .with_interface_tol(1e-13);
    let traj = simulator::simulate_psa_hm(&model, &x0, &y0, &cfg).unwrap();
    assert!(traj.diagnostics[0].interface_iters > 1, "iteration actually ran");

    let t = pencils::hm_step_map(&ssm, h, 1, Interfacing::Perfect).unwrap();
    let mut u0 = DVector::zeros(4);
    u0.rows_mut(0, 2).copy_from(&x0);
    u0.rows_mut(2, 2).copy_from(&y0);
    let u1 = t * u0;
    for i in 0..2 {
        assert!((traj.states[1][i] - u1[i]).abs() <= 1e-10);
        assert!((traj.algebraics[1][i] - u1[2 + i]).abs() <= 1e-10);
    }
}

/// Adams companion pencil versus the scalar-equation simulator: the
/// fitted amplification of a two-step scheme matches the dominant
/// companion eigenvalue.
#[test]
fn adams_companion_matches_fitted_amplification() {
    let lambda = -2.0;
    let ssm = fixtures::scalar_test_ssm(lambda);
    let scheme = PcScheme::adams_bashforth(2, 1, Interfacing::Extrapolation).unwrap();
    let h = 0.01;
    let pencil = pencils::adams_companion(&ssm, &scheme, h).unwrap();
    let spec = spectra::pencil_spectrum(&pencil).unwrap();
    let dominant = spec
        .eigenvalues()
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();

    let model = fixtures::scalar_test_equation(lambda);
    let cfg = SimConfig::new(h, 200.0 * h, IntegrationScheme::Pc(scheme)).unwrap();
    let traj = simulator::simulate_adams_pc(
        &model,
        &DVector::from_vec(vec![1.0]),
        &DVector::zeros(0),
        &cfg,
    )
    .unwrap();
    let n = traj.states.len();
    let ratio = traj.states[n - 1][0] / traj.states[n - 2][0];
    assert!(
        (ratio - dominant.re).abs() <= 1e-6,
        "ratio {ratio} vs companion dominant {dominant}"
    );
    // Consistency at vanishing step: dominant eigenvalue -> 1 + h lambda.
    let small = pencils::adams_companion(&ssm, &PcScheme::adams_bashforth(2, 1, Interfacing::Extrapolation).unwrap(), 1e-6).unwrap();
    let small_spec = spectra::pencil_spectrum(&small).unwrap();
    let dom_small = small_spec
        .eigenvalues()
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    assert!((dom_small.re - (1.0 + 1e-6 * lambda)).abs() <= 1e-9);
}

/// Companion form of the scalar DAE fixture: k blocks of structural zeros
/// and the dynamic roots shared with the k = 1 Heun pencil when k = 1.
#[test]
fn companion_k1_spectrum_matches_heun() {
    let ssm = fixtures::scalar_dae_default_ssm();
    let scheme = PcScheme::adams_bashforth(1, 1, Interfacing::Extrapolation).unwrap();
    let companion = pencils::adams_companion(&ssm, &scheme, 0.1).unwrap();
    let heun = pencils::pencil_pc_extrapolation(&ssm, 0.1, 1, PencilForm::Sparse).unwrap();
    let a = spectra::pencil_spectrum(&companion).unwrap();
    let b = spectra::pencil_spectrum(&heun).unwrap();
    assert_eq!(a.infinite_multiplicity(), b.infinite_multiplicity());
    let worst = max_rel_mismatch(a.eigenvalues(), b.eigenvalues());
    assert!(worst <= 1e-8);
}

/// DAE pencil: sparse and dense forms share the finite spectrum; the
/// sparse one adds mu infinite eigenvalues.
#[test]
fn dae_pencil_sparse_dense_agreement() {
    for seed in [3u64, 17, 29, 71] {
        let ssm = random_fixture(seed);
        let sparse =
            spectra::pencil_spectrum(&pencils::pencil_dae(&ssm, PencilForm::Sparse).unwrap())
                .unwrap();
        let dense =
            spectra::pencil_spectrum(&pencils::pencil_dae(&ssm, PencilForm::Dense).unwrap())
                .unwrap();
        assert_eq!(sparse.infinite_multiplicity(), ssm.mu(), "seed {seed}");
        assert_eq!(sparse.dim(), ssm.nu() + ssm.mu());
        let worst = max_rel_mismatch(dense.eigenvalues(), sparse.eigenvalues());
        assert!(worst <= 1e-8, "seed {seed}: {worst:.3e}");
    }
}

/// Spectra of real pencils are closed under conjugation.
#[test]
fn conjugate_symmetry_of_real_pencil_spectra() {
    for seed in 0..20u64 {
        let ssm = random_fixture(seed + 1000);
        let pencil = pencils::pencil_pc_extrapolation(&ssm, 0.03, 1, PencilForm::Sparse).unwrap();
        let spec = spectra::pencil_spectrum(&pencil).unwrap();
        for z in spec.eigenvalues() {
            let conj = Complex64::new(z.re, -z.im);
            let present = spec
                .eigenvalues()
                .iter()
                .any(|w| (w - conj).norm() <= 1e-9 * (1.0 + z.norm()));
            assert!(present, "seed {seed}: conjugate of {z} missing");
        }
    }
}
