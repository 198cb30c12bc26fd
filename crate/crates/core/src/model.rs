//! Nonlinear DAE models, equilibria and small-signal Jacobian blocks.
//!
//! A model is the semi-explicit pair
//!
//! ```text
//! x'(t) = f(x, y)        x in R^nu   (states)
//!     0 = g(x, y)        y in R^mu   (algebraic variables)
//! ```
//!
//! Around an equilibrium the four Jacobian blocks f_x, f_y, g_x, g_y form a
//! [`SmallSignalModel`], the raw material for every pencil in this crate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg;

pub mod fixtures;

/// Residual callback: maps (x, y) to a vector.
pub type ResidualFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// Jacobian callback: maps (x, y) to a matrix block.
pub type JacobianFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Optional analytic Jacobian maps for a [`DaeModel`].
pub struct AnalyticJacobians {
    pub fx: Box<JacobianFn>,
    pub fy: Box<JacobianFn>,
    pub gx: Box<JacobianFn>,
    pub gy: Box<JacobianFn>,
}

/// Nonlinear semi-explicit DAE definition.
pub struct DaeModel {
    nu: usize,
    mu: usize,
    f: Box<ResidualFn>,
    g: Box<ResidualFn>,
    jacobians: Option<AnalyticJacobians>,
}

impl DaeModel {
    /// Builds a model from the two residual callbacks.
    pub fn new(
        nu: usize,
        mu: usize,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        g: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            nu,
            mu,
            f: Box::new(f),
            g: Box::new(g),
            jacobians: None,
        }
    }

    /// Attaches analytic Jacobian maps.
    pub fn with_jacobians(mut self, jacobians: AnalyticJacobians) -> Self {
        self.jacobians = Some(jacobians);
        self
    }

    /// Builds the linear time-invariant model x' = fx x + fy y, 0 = gx x + gy y.
    pub fn linear(ssm: &SmallSignalModel) -> Self {
        let (fx, fy, gx, gy) = (
            ssm.fx.clone(),
            ssm.fy.clone(),
            ssm.gx.clone(),
            ssm.gy.clone(),
        );
        let (fx2, fy2, gx2, gy2) = (fx.clone(), fy.clone(), gx.clone(), gy.clone());
        DaeModel::new(
            ssm.nu(),
            ssm.mu(),
            move |x, y| &fx * x + &fy * y,
            move |x, y| &gx * x + &gy * y,
        )
        .with_jacobians(AnalyticJacobians {
            fx: Box::new(move |_, _| fx2.clone()),
            fy: Box::new(move |_, _| fy2.clone()),
            gx: Box::new(move |_, _| gx2.clone()),
            gy: Box::new(move |_, _| gy2.clone()),
        })
    }

    /// Number of state variables.
    pub fn nu(&self) -> usize {
        self.nu
    }

    /// Number of algebraic variables.
    pub fn mu(&self) -> usize {
        self.mu
    }

    /// True when analytic Jacobian maps are attached.
    pub fn has_analytic_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }

    fn check_point(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        if x.len() != self.nu {
            return Err(Error::DimensionMismatch(format!(
                "state vector has {} entries, model declares nu = {}",
                x.len(),
                self.nu
            )));
        }
        if y.len() != self.mu {
            return Err(Error::DimensionMismatch(format!(
                "algebraic vector has {} entries, model declares mu = {}",
                y.len(),
                self.mu
            )));
        }
        Ok(())
    }

    /// Evaluates f with dimension checks on both ends.
    pub fn eval_f(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x, y)?;
        let out = (self.f)(x, y);
        if out.len() != self.nu {
            return Err(Error::DimensionMismatch(format!(
                "f returned {} entries, expected nu = {}",
                out.len(),
                self.nu
            )));
        }
        Ok(out)
    }

    /// Evaluates g with dimension checks on both ends.
    pub fn eval_g(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x, y)?;
        let out = (self.g)(x, y);
        if out.len() != self.mu {
            return Err(Error::DimensionMismatch(format!(
                "g returned {} entries, expected mu = {}",
                out.len(),
                self.mu
            )));
        }
        Ok(out)
    }

    /// Max-norm of the stacked residual at a point.
    pub fn residual_norm(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let rf = linalg::inf_norm(&self.eval_f(x, y)?);
        let rg = linalg::inf_norm(&self.eval_g(x, y)?);
        Ok(rf.max(rg))
    }

    /// The four Jacobian blocks at (x, y); analytic maps when attached,
    /// central differences otherwise.
    pub fn jacobian_blocks(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<SmallSignalModel> {
        self.check_point(x, y)?;
        match &self.jacobians {
            Some(j) => {
                SmallSignalModel::new((j.fx)(x, y), (j.fy)(x, y), (j.gx)(x, y), (j.gy)(x, y))
                    .map_err(nan_as_jacobian_error)
            }
            None => self.fd_blocks(x, y, DEFAULT_FD_STEP),
        }
    }

    /// Central-difference Jacobian blocks with per-component step
    /// `fd_step * (1 + |v_i|)`.
    pub fn fd_blocks(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        fd_step: f64,
    ) -> Result<SmallSignalModel> {
        self.check_point(x, y)?;
        if fd_step <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fd_step must be positive, got {fd_step}"
            )));
        }
        let fx = self.fd_block(x, y, fd_step, true, true)?;
        let fy = self.fd_block(x, y, fd_step, true, false)?;
        let gx = self.fd_block(x, y, fd_step, false, true)?;
        let gy = self.fd_block(x, y, fd_step, false, false)?;
        SmallSignalModel::new(fx, fy, gx, gy).map_err(nan_as_jacobian_error)
    }

    fn fd_block(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        fd_step: f64,
        of_f: bool,
        wrt_x: bool,
    ) -> Result<DMatrix<f64>> {
        let rows = if of_f { self.nu } else { self.mu };
        let cols = if wrt_x { self.nu } else { self.mu };
        let mut block = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            let base = if wrt_x { x[j] } else { y[j] };
            let h = fd_step * (1.0 + base.abs());
            let eval = |v: f64| -> Result<DVector<f64>> {
                let mut xp = x.clone();
                let mut yp = y.clone();
                if wrt_x {
                    xp[j] = v;
                } else {
                    yp[j] = v;
                }
                if of_f {
                    self.eval_f(&xp, &yp)
                } else {
                    self.eval_g(&xp, &yp)
                }
            };
            let plus = eval(base + h)?;
            let minus = eval(base - h)?;
            let col = (plus - minus) / (2.0 * h);
            block.set_column(j, &col);
        }
        Ok(block)
    }
}

fn nan_as_jacobian_error(e: Error) -> Error {
    match e {
        Error::NonFinite(_) => Error::NonFiniteJacobian,
        other => other,
    }
}

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Condition-number cap above which g_y is declared singular.
pub const GY_COND_CAP: f64 = 1e12;

/// A point satisfying both residuals to within a stated tolerance.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub x0: DVector<f64>,
    pub y0: DVector<f64>,
    pub residual_norm: f64,
}

/// The four Jacobian blocks of a linearized DAE.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignalModel {
    fx: DMatrix<f64>,
    fy: DMatrix<f64>,
    gx: DMatrix<f64>,
    gy: DMatrix<f64>,
}

impl SmallSignalModel {
    /// Validates block dimensions and finiteness.
    pub fn new(
        fx: DMatrix<f64>,
        fy: DMatrix<f64>,
        gx: DMatrix<f64>,
        gy: DMatrix<f64>,
    ) -> Result<Self> {
        let nu = fx.nrows();
        let mu = gy.nrows();
        if fx.ncols() != nu {
            return Err(Error::DimensionMismatch(format!(
                "fx must be square, got {}x{}",
                fx.nrows(),
                fx.ncols()
            )));
        }
        if fy.nrows() != nu || fy.ncols() != mu {
            return Err(Error::DimensionMismatch(format!(
                "fy must be {}x{}, got {}x{}",
                nu,
                mu,
                fy.nrows(),
                fy.ncols()
            )));
        }
        if gx.nrows() != mu || gx.ncols() != nu {
            return Err(Error::DimensionMismatch(format!(
                "gx must be {}x{}, got {}x{}",
                mu,
                nu,
                gx.nrows(),
                gx.ncols()
            )));
        }
        if gy.ncols() != mu {
            return Err(Error::DimensionMismatch(format!(
                "gy must be square, got {}x{}",
                gy.nrows(),
                gy.ncols()
            )));
        }
        for (name, m) in [("fx", &fx), ("fy", &fy), ("gx", &gx), ("gy", &gy)] {
            if !linalg::all_finite(m) {
                return Err(Error::NonFinite(format!("block {name}")));
            }
        }
        Ok(Self { fx, fy, gx, gy })
    }

    pub fn nu(&self) -> usize {
        self.fx.nrows()
    }

    pub fn mu(&self) -> usize {
        self.gy.nrows()
    }

    pub fn fx(&self) -> &DMatrix<f64> {
        &self.fx
    }

    pub fn fy(&self) -> &DMatrix<f64> {
        &self.fy
    }

    pub fn gx(&self) -> &DMatrix<f64> {
        &self.gx
    }

    pub fn gy(&self) -> &DMatrix<f64> {
        &self.gy
    }

    /// W = gy^{-1} gx by direct solve (no explicit inverse).
    pub(crate) fn gy_solve_gx(&self) -> Result<DMatrix<f64>> {
        if self.mu() == 0 {
            return Ok(DMatrix::zeros(0, self.nu()));
        }
        linalg::solve_checked(&self.gy, &self.gx, 1.0 / GY_COND_CAP, |rc| {
            Error::SingularAlgebraicJacobian { rcond: rc }
        })
    }

    /// Reduced state matrix A_s = fx - fy gy^{-1} gx.
    ///
    /// Fails with `SingularAlgebraicJacobian` when gy violates the
    /// condition cap; callers must fall back to the sparse pencil form.
    pub fn state_matrix(&self) -> Result<DMatrix<f64>> {
        if self.mu() == 0 {
            return Ok(self.fx.clone());
        }
        let w = self.gy_solve_gx()?;
        Ok(&self.fx - &self.fy * w)
    }

    /// Loads a pre-linearized model from the JSON container, resolving any
    /// Matrix Market paths relative to the file's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))?;
        let parsed: ModelJson = serde_json::from_str(&text)
            .map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))?;
        parsed.into_model(path.parent().unwrap_or_else(|| Path::new(".")))
    }

    /// Serializes to the JSON container with inline dense blocks.
    pub fn to_json(&self) -> String {
        let doc = ModelJson {
            nu: self.nu(),
            mu: self.mu(),
            blocks: Some(BlockJson {
                fx: linalg::matrix_to_rows(&self.fx),
                fy: linalg::matrix_to_rows(&self.fy),
                gx: linalg::matrix_to_rows(&self.gx),
                gy: linalg::matrix_to_rows(&self.gy),
            }),
            block_paths: None,
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    fx: Vec<Vec<f64>>,
    fy: Vec<Vec<f64>>,
    gx: Vec<Vec<f64>>,
    gy: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BlockPathsJson {
    fx: String,
    fy: String,
    gx: String,
    gy: String,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    nu: usize,
    mu: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<BlockJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block_paths: Option<BlockPathsJson>,
}

impl ModelJson {
    fn into_model(self, base_dir: &Path) -> Result<SmallSignalModel> {
        let (nu, mu) = (self.nu, self.mu);
        let shape = |rows: Vec<Vec<f64>>, nr: usize, nc: usize, name: &str| -> Result<DMatrix<f64>> {
            let m = linalg::matrix_from_rows(&rows, nc)?;
            if m.nrows() != nr || (nr > 0 && m.ncols() != nc) {
                return Err(Error::DimensionMismatch(format!(
                    "block {name} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    nr,
                    nc
                )));
            }
            // A block with zero rows parses as 0x0; rebuild with the right
            // column count so later products line up.
            if m.nrows() == 0 {
                return Ok(DMatrix::zeros(nr, nc));
            }
            Ok(m)
        };
        match (self.blocks, self.block_paths) {
            (Some(b), None) => SmallSignalModel::new(
                shape(b.fx, nu, nu, "fx")?,
                shape(b.fy, nu, mu, "fy")?,
                shape(b.gx, mu, nu, "gx")?,
                shape(b.gy, mu, mu, "gy")?,
            ),
            (None, Some(p)) => {
                let load = |rel: &str, nr: usize, nc: usize, name: &str| -> Result<DMatrix<f64>> {
                    let m = io::read_matrix_market(&base_dir.join(rel))?;
                    if m.nrows() != nr || m.ncols() != nc {
                        return Err(Error::DimensionMismatch(format!(
                            "block {name} from {rel} is {}x{}, expected {}x{}",
                            m.nrows(),
                            m.ncols(),
                            nr,
                            nc
                        )));
                    }
                    Ok(m)
                };
                SmallSignalModel::new(
                    load(&p.fx, nu, nu, "fx")?,
                    load(&p.fy, nu, mu, "fy")?,
                    load(&p.gx, mu, nu, "gx")?,
                    load(&p.gy, mu, mu, "gy")?,
                )
            }
            (Some(_), Some(_)) => Err(Error::FileFormat(
                "model file must use either inline blocks or block_paths, not both".into(),
            )),
            (None, None) => Err(Error::FileFormat(
                "model file carries neither blocks nor block_paths".into(),
            )),
        }
    }
}

/// Jacobian evaluation mode for [`linearize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Use the model's analytic maps; fails if they are absent.
    Analytic,
    /// Symmetric two-point stencil per column.
    CentralDifference,
}

/// Newton search for a point with residual_norm <= tol.
///
/// Plain full-step Newton on the stacked residual [f; g] with the full
/// (nu+mu) Jacobian.
pub fn find_equilibrium(
    model: &DaeModel,
    guess_x: &DVector<f64>,
    guess_y: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Equilibrium> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut x = guess_x.clone();
    let mut y = guess_y.clone();
    let mut residual = model.residual_norm(&x, &y)?;
    for _ in 0..max_iter {
        if residual <= tol {
            return Ok(Equilibrium {
                x0: x,
                y0: y,
                residual_norm: residual,
            });
        }
        let blocks = model.jacobian_blocks(&x, &y)?;
        let n = model.nu() + model.mu();
        let mut jac = DMatrix::zeros(n, n);
        linalg::set_block(&mut jac, 0, 0, blocks.fx());
        linalg::set_block(&mut jac, 0, model.nu(), blocks.fy());
        linalg::set_block(&mut jac, model.nu(), 0, blocks.gx());
        linalg::set_block(&mut jac, model.nu(), model.nu(), blocks.gy());

        let mut rhs = DVector::zeros(n);
        let fv = model.eval_f(&x, &y)?;
        let gv = model.eval_g(&x, &y)?;
        rhs.rows_mut(0, model.nu()).copy_from(&(-&fv));
        rhs.rows_mut(model.nu(), model.mu()).copy_from(&(-&gv));

        let delta = linalg::solve_vec_checked(&jac, &rhs, 1e-14, |rc| Error::SingularJacobian {
            rcond: rc,
        })?;
        x += delta.rows(0, model.nu());
        y += delta.rows(model.nu(), model.mu());
        if !linalg::all_finite_vec(&x) || !linalg::all_finite_vec(&y) {
            return Err(Error::NonFinite("Newton iterate diverged".into()));
        }
        residual = model.residual_norm(&x, &y)?;
    }
    if residual <= tol {
        Ok(Equilibrium {
            x0: x,
            y0: y,
            residual_norm: residual,
        })
    } else {
        Err(Error::NonConvergence {
            max_iter,
            residual,
        })
    }
}

/// Evaluates the four Jacobian blocks at an equilibrium.
///
/// `fd_step` applies only to [`JacobianMode::CentralDifference`]; `None`
/// selects the default relative step.
pub fn linearize(
    model: &DaeModel,
    eq: &Equilibrium,
    mode: JacobianMode,
    fd_step: Option<f64>,
) -> Result<SmallSignalModel> {
    match mode {
        JacobianMode::Analytic => {
            if !model.has_analytic_jacobians() {
                return Err(Error::AnalyticJacobiansUnavailable);
            }
            model.jacobian_blocks(&eq.x0, &eq.y0)
        }
        JacobianMode::CentralDifference => {
            model.fd_blocks(&eq.x0, &eq.y0, fd_step.unwrap_or(DEFAULT_FD_STEP))
        }
    }
}
