//! Partitioned time-domain integration (forward Euler, Heun and
//! Adams-Bashforth predictor-corrector schemes with either interfacing
//! strategy) plus a simultaneous trapezoidal reference solver.
//!
//! The partitioned solvers advance the states with an explicit scheme and
//! then re-solve the algebraic constraints by Newton iteration; they are
//! the ground truth the pencil constructions linearize, and the test
//! suites exercise that identity heavily.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::io::fmt_g17;
use crate::linalg;
use crate::model::DaeModel;
use crate::pencils::{Interfacing, PcScheme};

/// Cap on the perfect-interfacing repeat loop.
const INTERFACE_MAX_REPEATS: usize = 50;

/// Which integrator drives a run.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegrationScheme {
    /// Forward Euler (the r = 0 predictor on its own).
    Fem,
    /// Simultaneous trapezoidal reference solver.
    Tm,
    /// Partitioned predictor-corrector scheme.
    Pc(PcScheme),
}

/// Run configuration shared by all integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub h: f64,
    pub t_end: f64,
    pub scheme: IntegrationScheme,
    /// Acceptance threshold of the perfect-interfacing repeat loop
    /// (max-norm of y_int - y_{n+1}).
    pub interface_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// The trapezoidal solver refactors its Jacobian every this many steps;
    /// 1 keeps it honest, larger values trade robustness for speed.
    pub jacobian_reuse_steps: usize,
}

impl SimConfig {
    pub fn new(h: f64, t_end: f64, scheme: IntegrationScheme) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) || h > t_end {
            return Err(Error::InvalidArgument(format!(
                "need 0 < h <= t_end, got h = {h}, t_end = {t_end}"
            )));
        }
        Ok(Self {
            h,
            t_end,
            scheme,
            interface_tol: 1e-10,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            jacobian_reuse_steps: 1,
        })
    }

    pub fn with_interface_tol(mut self, tol: f64) -> Self {
        self.interface_tol = tol;
        self
    }

    pub fn with_newton(mut self, tol: f64, max_iter: usize) -> Self {
        self.newton_tol = tol;
        self.newton_max_iter = max_iter;
        self
    }

    pub fn with_jacobian_reuse(mut self, steps: usize) -> Self {
        self.jacobian_reuse_steps = steps.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.interface_tol <= 0.0 || self.newton_tol <= 0.0 {
            return Err(Error::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        ((self.t_end / self.h) + 1e-9).floor() as usize
    }
}

/// Per-step solver effort counters.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StepDiagnostics {
    /// Newton iterations spent in algebraic or simultaneous solves.
    pub newton_iters: usize,
    /// Corrector-chain passes; above 1 only for perfect interfacing.
    pub interface_iters: usize,
}

/// Uniformly sampled solution of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub algebraics: Vec<DVector<f64>>,
    /// One entry per step taken (times.len() - 1 entries).
    pub diagnostics: Vec<StepDiagnostics>,
    /// Leading steps integrated with Heun to fill multistep history.
    pub bootstrap_steps: usize,
}

impl Trajectory {
    /// CSV rows `t,x_0..x_{nu-1},y_0..y_{mu-1}`.
    pub fn to_csv(&self) -> String {
        let nu = self.states.first().map_or(0, |x| x.len());
        let mu = self.algebraics.first().map_or(0, |y| y.len());
        let mut out = String::from("t");
        for i in 0..nu {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 0..mu {
            out.push_str(&format!(",y_{i}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&fmt_g17(*t));
            for v in self.states[i].iter() {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
            for v in self.algebraics[i].iter() {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
            out.push('\n');
        }
        out
    }

    /// JSON sidecar with the per-step iteration counters.
    pub fn diagnostics_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            bootstrap_steps: usize,
            steps: &'a [StepDiagnostics],
        }
        serde_json::to_string_pretty(&Sidecar {
            bootstrap_steps: self.bootstrap_steps,
            steps: &self.diagnostics,
        })
        .expect("diagnostics serialization cannot fail")
    }

    fn with_capacity(n_steps: usize, x0: DVector<f64>, y0: DVector<f64>) -> Self {
        let mut t = Self {
            times: Vec::with_capacity(n_steps + 1),
            states: Vec::with_capacity(n_steps + 1),
            algebraics: Vec::with_capacity(n_steps + 1),
            diagnostics: Vec::with_capacity(n_steps),
            bootstrap_steps: 0,
        };
        t.times.push(0.0);
        t.states.push(x0);
        t.algebraics.push(y0);
        t
    }
}

/// Newton solution of g(x, y) = 0 for y at fixed x.
///
/// The step-size factor that scales the algebraic residual in the
/// partitioned formulation is dropped here: it multiplies residual and
/// Jacobian alike and cancels out of the update.
pub fn solve_algebraic(
    model: &DaeModel,
    x: &DVector<f64>,
    y_guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    solve_algebraic_counted(model, x, y_guess, tol, max_iter).map(|(y, _)| y)
}

fn solve_algebraic_counted(
    model: &DaeModel,
    x: &DVector<f64>,
    y_guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    if model.mu() == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    let mut y = y_guess.clone();
    for iter in 0..=max_iter {
        let g = model.eval_g(x, &y)?;
        let res = linalg::inf_norm(&g);
        if res <= tol {
            return Ok((y, iter));
        }
        if iter == max_iter {
            return Err(Error::NonConvergence {
                max_iter,
                residual: res,
            });
        }
        let gy = model.jacobian_blocks(x, &y)?.gy().clone();
        let delta = linalg::solve_vec_checked(&gy, &(-&g), 1e-12, |rc| {
            Error::SingularAlgebraicJacobian { rcond: rc }
        })?;
        y += delta;
        if !linalg::all_finite_vec(&y) {
            return Err(Error::NonFinite("algebraic Newton iterate".into()));
        }
    }
    unreachable!("loop either returns or errors at max_iter")
}

fn check_initial(model: &DaeModel, x0: &DVector<f64>, y0: &DVector<f64>, tol: f64) -> Result<()> {
    let res = linalg::inf_norm(&model.eval_g(x0, y0)?);
    if res > tol {
        return Err(Error::InconsistentInitialState { residual: res });
    }
    Ok(())
}

/// Forward Euler with partitioned algebraic resolution.
pub fn simulate_fem(
    model: &DaeModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let scheme = PcScheme::heun(0, Interfacing::Extrapolation);
    simulate_pc_kernel(model, x0, y0, cfg, &scheme)
}

/// Heun predictor-corrector (r corrector passes) with the configured
/// interfacing strategy. The scheme is read from `cfg.scheme`, which must
/// be a one-step PC scheme.
pub fn simulate_psa_hm(
    model: &DaeModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let scheme = match &cfg.scheme {
        IntegrationScheme::Pc(s) if s.k() == 1 => s.clone(),
        IntegrationScheme::Fem => PcScheme::heun(0, Interfacing::Extrapolation),
        _ => {
            return Err(Error::InvalidArgument(
                "simulate_psa_hm needs a one-step PC scheme in cfg.scheme".into(),
            ))
        }
    };
    simulate_pc_kernel(model, x0, y0, cfg, &scheme)
}

/// General Adams-Bashforth predictor-corrector run. Missing history on the
/// first k-1 steps is bootstrapped with Heun steps at the same h, recorded
/// in `Trajectory::bootstrap_steps`.
pub fn simulate_adams_pc(
    model: &DaeModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let scheme = match &cfg.scheme {
        IntegrationScheme::Pc(s) => s.clone(),
        _ => {
            return Err(Error::InvalidArgument(
                "simulate_adams_pc needs a PC scheme in cfg.scheme".into(),
            ))
        }
    };
    simulate_pc_kernel(model, x0, y0, cfg, &scheme)
}

fn simulate_pc_kernel(
    model: &DaeModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &SimConfig,
    scheme: &PcScheme,
) -> Result<Trajectory> {
    check_initial(model, x0, y0, cfg.newton_tol)?;
    let n_steps = cfg.n_steps();
    let mut traj = Trajectory::with_capacity(n_steps, x0.clone(), y0.clone());
    let bootstrap = PcScheme::heun(scheme.r(), scheme.interfacing());

    let mut f_hist: VecDeque<DVector<f64>> = VecDeque::with_capacity(scheme.k());
    f_hist.push_back(model.eval_f(x0, y0)?);

    for step in 0..n_steps {
        let (effective, hist_len) = if f_hist.len() < scheme.k() {
            traj.bootstrap_steps += 1;
            (&bootstrap, 1)
        } else {
            (scheme, scheme.k())
        };
        let hist: Vec<&DVector<f64>> = f_hist.iter().rev().take(hist_len).rev().collect();
        let x_n = traj.states.last().expect("trajectory seeded").clone();
        let y_n = traj.algebraics.last().expect("trajectory seeded").clone();
        let (x_next, y_next, diag) = pc_step(model, &x_n, &y_n, &hist, cfg, effective)
            .map_err(|e| Error::StepFailed {
                step,
                source: Box::new(e),
            })?;
        let f_next = model.eval_f(&x_next, &y_next)?;
        if f_hist.len() == scheme.k() {
            f_hist.pop_front();
        }
        f_hist.push_back(f_next);
        traj.times.push((step + 1) as f64 * cfg.h);
        traj.states.push(x_next);
        traj.algebraics.push(y_next);
        traj.diagnostics.push(diag);
    }
    Ok(traj)
}

/// One predictor-corrector step. `hist` holds f at the accepted points
/// f_{n-k+1} .. f_n, oldest first.
fn pc_step(
    model: &DaeModel,
    x_n: &DVector<f64>,
    y_n: &DVector<f64>,
    hist: &[&DVector<f64>],
    cfg: &SimConfig,
    scheme: &PcScheme,
) -> Result<(DVector<f64>, DVector<f64>, StepDiagnostics)> {
    let k = scheme.k();
    debug_assert_eq!(hist.len(), k);
    let h = cfg.h;
    let c = scheme.predictor_history_weights();
    let b = scheme.b();
    let mut diag = StepDiagnostics::default();

    let mut pred_sum = hist[0] * c[0];
    for j in 1..k {
        pred_sum += hist[j] * c[j];
    }
    let predictor = x_n + pred_sum * h;

    if scheme.r() == 0 {
        let (y_next, iters) =
            solve_algebraic_counted(model, &predictor, y_n, cfg.newton_tol, cfg.newton_max_iter)?;
        diag.newton_iters = iters;
        diag.interface_iters = 0;
        return Ok((predictor, y_next, diag));
    }

    let mut base_sum = hist[0] * b[0];
    for j in 1..k {
        base_sum += hist[j] * b[j];
    }
    let base = x_n + base_sum * h;
    let h_bk = h * b[k];

    let corrector_chain = |y_int: &DVector<f64>| -> Result<DVector<f64>> {
        let mut xi = predictor.clone();
        for _ in 0..scheme.r() {
            let f_c = model.eval_f(&xi, y_int)?;
            xi = &base + f_c * h_bk;
        }
        Ok(xi)
    };

    match scheme.interfacing() {
        Interfacing::Extrapolation => {
            let x_next = corrector_chain(y_n)?;
            let (y_next, iters) =
                solve_algebraic_counted(model, &x_next, y_n, cfg.newton_tol, cfg.newton_max_iter)?;
            diag.newton_iters = iters;
            diag.interface_iters = 1;
            Ok((x_next, y_next, diag))
        }
        Interfacing::Perfect => {
            let mut y_int = y_n.clone();
            for pass in 1..=INTERFACE_MAX_REPEATS {
                let x_cand = corrector_chain(&y_int)?;
                let (y_cand, iters) = solve_algebraic_counted(
                    model,
                    &x_cand,
                    y_n,
                    cfg.newton_tol,
                    cfg.newton_max_iter,
                )?;
                diag.newton_iters += iters;
                diag.interface_iters = pass;
                if linalg::inf_norm(&(&y_int - &y_cand)) <= cfg.interface_tol {
                    return Ok((x_cand, y_cand, diag));
                }
                y_int = y_cand;
            }
            Err(Error::InterfaceNonConvergence {
                max_repeats: INTERFACE_MAX_REPEATS,
            })
        }
    }
}

/// Simultaneous trapezoidal reference solver with increment-based Newton
/// convergence. Serves as the accuracy baseline for the partitioned runs.
pub fn simulate_simultaneous_tm(
    model: &DaeModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (nu, mu) = (model.nu(), model.mu());
    if x0.len() != nu || y0.len() != mu {
        return Err(Error::DimensionMismatch(format!(
            "initial point has ({}, {}) entries, model declares ({nu}, {mu})",
            x0.len(),
            y0.len()
        )));
    }
    let n_steps = cfg.n_steps();
    let mut traj = Trajectory::with_capacity(n_steps, x0.clone(), y0.clone());
    let h = cfg.h;
    let mut lu: Option<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;

    for step in 0..n_steps {
        let x_n = traj.states.last().expect("seeded").clone();
        let y_n = traj.algebraics.last().expect("seeded").clone();
        let f_n = model.eval_f(&x_n, &y_n)?;

        if step % cfg.jacobian_reuse_steps == 0 || lu.is_none() {
            let blocks = model.jacobian_blocks(&x_n, &y_n)?;
            let n = nu + mu;
            let mut jac = DMatrix::zeros(n, n);
            let top_left = DMatrix::identity(nu, nu) - blocks.fx() * (0.5 * h);
            linalg::set_block(&mut jac, 0, 0, &top_left);
            let top_right = blocks.fy() * (-0.5 * h);
            linalg::set_block(&mut jac, 0, nu, &top_right);
            let bottom_left = blocks.gx() * h;
            linalg::set_block(&mut jac, nu, 0, &bottom_left);
            let bottom_right = blocks.gy() * h;
            linalg::set_block(&mut jac, nu, nu, &bottom_right);
            let rc = linalg::rcond(&jac);
            if rc < 1e-14 {
                return Err(Error::StepFailed {
                    step,
                    source: Box::new(Error::SingularJacobian { rcond: rc }),
                });
            }
            lu = Some(jac.lu());
        }
        let factor = lu.as_ref().expect("factorized above");

        let mut x_ip = x_n.clone();
        let mut y_ip = y_n.clone();
        let mut converged = false;
        let mut iters = 0;
        for _ in 0..cfg.newton_max_iter {
            iters += 1;
            let f_ip = model.eval_f(&x_ip, &y_ip)?;
            let phi = &x_ip - &x_n - (&f_n + &f_ip) * (0.5 * h);
            let rho = model.eval_g(&x_ip, &y_ip)? * h;
            let mut rhs = DVector::zeros(nu + mu);
            rhs.rows_mut(0, nu).copy_from(&(-phi));
            rhs.rows_mut(nu, mu).copy_from(&(-rho));
            let delta = factor.solve(&rhs).ok_or_else(|| Error::StepFailed {
                step,
                source: Box::new(Error::SingularJacobian { rcond: 0.0 }),
            })?;
            let dx = delta.rows(0, nu).into_owned();
            let dy = delta.rows(nu, mu).into_owned();
            x_ip += &dx;
            y_ip += &dy;
            if linalg::inf_norm(&dx) < cfg.newton_tol && linalg::inf_norm(&dy) < cfg.newton_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::StepFailed {
                step,
                source: Box::new(Error::NonConvergence {
                    max_iter: cfg.newton_max_iter,
                    residual: f64::NAN,
                }),
            });
        }
        traj.times.push((step + 1) as f64 * h);
        traj.states.push(x_ip);
        traj.algebraics.push(y_ip);
        traj.diagnostics.push(StepDiagnostics {
            newton_iters: iters,
            interface_iters: 0,
        });
    }
    Ok(traj)
}
