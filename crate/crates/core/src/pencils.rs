//! Construction of the matrix pencils that describe partitioned
//! predictor-corrector integration of a linearized DAE.
//!
//! Writing the linearized one-step update of a scheme as a linear system of
//! difference equations E' u_{n+1} = A' u_n turns questions about numerical
//! stability and accuracy into generalized eigenvalue problems for the
//! pencil z E' - A'. This module builds:
//!
//! * the reference DAE pencil s E - A (sparse) and s I - A_s (dense),
//! * the Heun predictor-corrector pencils for extrapolated and perfect
//!   interfacing of the algebraic variables, in sparse and dense form,
//! * the companion-form pencil of a general Adams-Bashforth
//!   predictor-corrector with k history steps,
//! * the delay pencil that models extrapolation as a one-step lag on the
//!   algebraic variables, and
//! * the exact one-step update map the pencils linearize, used as an
//!   independent oracle by the test suites.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SmallSignalModel;

/// Which complex plane the pencil's eigenvalues live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Continuous-time (Laplace) plane.
    S,
    /// Discrete-time plane of one-step recursions.
    Z,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::S => write!(f, "S"),
            Domain::Z => write!(f, "Z"),
        }
    }
}

/// How the corrector obtains the not-yet-computed algebraic variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interfacing {
    /// Use the previous step's values y_n.
    Extrapolation,
    /// Idealized y_{n+1}; realized in simulation by repeating the step.
    Perfect,
}

impl std::fmt::Display for Interfacing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Interfacing::Extrapolation => write!(f, "extrapolation"),
            Interfacing::Perfect => write!(f, "perfect"),
        }
    }
}

/// Sparse block assembly over (nu + mu) unknowns versus the dense reduction
/// to the nu dynamic unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PencilForm {
    Sparse,
    Dense,
}

impl std::fmt::Display for PencilForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PencilForm::Sparse => write!(f, "sparse"),
            PencilForm::Dense => write!(f, "dense"),
        }
    }
}

/// Predictor family of a PC scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcFamily {
    Heun,
    #[serde(rename = "ab")]
    AdamsBashforth,
}

/// A predictor-corrector scheme: k-step Adams-Bashforth predictor followed
/// by r explicit evaluations of the Adams-Moulton corrector.
///
/// Heun's method is the k = 1 member with gamma = (1) and b = (1/2, 1/2);
/// r = 0 degenerates to the plain explicit predictor (forward Euler for
/// k = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcScheme {
    family: PcFamily,
    k: usize,
    r: usize,
    interfacing: Interfacing,
    /// Predictor backward-difference weights gamma_0 .. gamma_{k-1}.
    gamma: Vec<f64>,
    /// Corrector weights b_0 .. b_k; b_k multiplies the new evaluation.
    b: Vec<f64>,
}

/// Predictor weights gamma_j for up to four history steps.
const ADAMS_GAMMA: [f64; 4] = [1.0, 1.0 / 2.0, 5.0 / 12.0, 3.0 / 8.0];

/// Corrector weight tables b_0..b_k for k = 1..4, oldest history point first.
fn adams_b_table(k: usize) -> Option<Vec<f64>> {
    match k {
        1 => Some(vec![1.0 / 2.0, 1.0 / 2.0]),
        2 => Some(vec![-1.0 / 12.0, 8.0 / 12.0, 5.0 / 12.0]),
        3 => Some(vec![1.0 / 24.0, -5.0 / 24.0, 19.0 / 24.0, 9.0 / 24.0]),
        4 => Some(vec![
            -19.0 / 720.0,
            106.0 / 720.0,
            -264.0 / 720.0,
            646.0 / 720.0,
            251.0 / 720.0,
        ]),
        _ => None,
    }
}

impl PcScheme {
    /// Heun's method with r corrector steps.
    pub fn heun(r: usize, interfacing: Interfacing) -> Self {
        Self {
            family: PcFamily::Heun,
            k: 1,
            r,
            interfacing,
            gamma: vec![1.0],
            b: vec![0.5, 0.5],
        }
    }

    /// k-step Adams-Bashforth predictor with the bundled coefficient tables
    /// (k = 1..4) and r corrector steps.
    pub fn adams_bashforth(k: usize, r: usize, interfacing: Interfacing) -> Result<Self> {
        if k == 0 || k > 4 {
            return Err(Error::CoefficientMismatch(format!(
                "bundled Adams-Bashforth tables cover k = 1..4, got k = {k}"
            )));
        }
        let gamma = ADAMS_GAMMA[..k].to_vec();
        let b = adams_b_table(k).expect("k validated above");
        let scheme = Self::custom(k, r, interfacing, gamma, b)?;
        debug_assert!(k != 1 || scheme.is_heun(), "k = 1 tables are Heun's");
        Ok(scheme)
    }

    /// Scheme with caller-supplied coefficient tables.
    pub fn custom(
        k: usize,
        r: usize,
        interfacing: Interfacing,
        gamma: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::CoefficientMismatch("k must be at least 1".into()));
        }
        if gamma.len() != k {
            return Err(Error::CoefficientMismatch(format!(
                "predictor table has {} coefficients, expected k = {k}",
                gamma.len()
            )));
        }
        if b.len() != k + 1 {
            return Err(Error::CoefficientMismatch(format!(
                "corrector table has {} coefficients, expected k + 1 = {}",
                b.len(),
                k + 1
            )));
        }
        Ok(Self {
            family: PcFamily::AdamsBashforth,
            k,
            r,
            interfacing,
            gamma,
            b,
        })
    }

    pub fn family(&self) -> PcFamily {
        self.family
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn interfacing(&self) -> Interfacing {
        self.interfacing
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// True when the coefficients coincide with Heun's method, whichever
    /// family tag the scheme carries.
    pub fn is_heun(&self) -> bool {
        self.k == 1 && self.gamma == [1.0] && self.b == [0.5, 0.5]
    }

    /// Predictor weights c_j on the raw history values f_{n-k+j+1},
    /// obtained by expanding the backward-difference operators:
    /// c_j = sum_{l>=i} gamma_l (-1)^i binom(l, i) with i = k - 1 - j.
    pub fn predictor_history_weights(&self) -> Vec<f64> {
        let k = self.k;
        let mut c = vec![0.0; k];
        for (j, cj) in c.iter_mut().enumerate() {
            let i = k - 1 - j;
            let mut acc = 0.0;
            for (l, gamma_l) in self.gamma.iter().enumerate().skip(i) {
                acc += gamma_l * neg_pow(i) * binomial(l, i);
            }
            *cj = acc;
        }
        c
    }

    /// Short label used in report files, e.g. `hm_r1_ext` or `ab2_r1_perfect`.
    pub fn label(&self) -> String {
        let int_tag = match self.interfacing {
            Interfacing::Extrapolation => "ext",
            Interfacing::Perfect => "perfect",
        };
        if self.is_heun() {
            if self.r == 0 {
                "fem".to_string()
            } else {
                format!("hm_r{}_{}", self.r, int_tag)
            }
        } else {
            format!("ab{}_r{}_{}", self.k, self.r, int_tag)
        }
    }
}

fn neg_pow(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// A generalized matrix pair (E', A') representing z E' - A' or s E - A,
/// tagged with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    domain: Domain,
    h: f64,
    r: Option<usize>,
    interfacing: Option<Interfacing>,
    form: PencilForm,
    nu: usize,
    mu: usize,
}

impl Pencil {
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Step size; zero for the reference DAE pencil.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r(&self) -> Option<usize> {
        self.r
    }

    pub fn interfacing(&self) -> Option<Interfacing> {
        self.interfacing
    }

    pub fn form(&self) -> PencilForm {
        self.form
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Reduces z E' - A' to the standard problem E'^{-1} A'.
    ///
    /// Fails with `SingularMassMatrix` when E' is numerically singular;
    /// callers should then stay with the generalized formulation.
    pub fn standard_form(&self) -> Result<DMatrix<f64>> {
        linalg::solve_checked(&self.e, &self.a, 1e-12, |rc| Error::SingularMassMatrix {
            rcond: rc,
        })
    }

    /// Serializes to the JSON container (metadata header plus the two
    /// matrices as row-major nested arrays).
    pub fn to_json(&self) -> String {
        let doc = PencilJson {
            domain: self.domain,
            h: self.h,
            r: self.r,
            interfacing: self.interfacing,
            form: self.form,
            nu: self.nu,
            mu: self.mu,
            e: linalg::matrix_to_rows(&self.e),
            a: linalg::matrix_to_rows(&self.a),
        };
        serde_json::to_string_pretty(&doc).expect("pencil serialization cannot fail")
    }

    /// Parses the JSON container produced by [`Pencil::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PencilJson =
            serde_json::from_str(text).map_err(|e| Error::FileFormat(e.to_string()))?;
        let dim = doc.e.len();
        let e = linalg::matrix_from_rows(&doc.e, dim)?;
        let a = linalg::matrix_from_rows(&doc.a, dim)?;
        if e.nrows() != e.ncols() || e.shape() != a.shape() {
            return Err(Error::DimensionMismatch(
                "pencil matrices must be square and share dimensions".into(),
            ));
        }
        Ok(Self {
            e,
            a,
            domain: doc.domain,
            h: doc.h,
            r: doc.r,
            interfacing: doc.interfacing,
            form: doc.form,
            nu: doc.nu,
            mu: doc.mu,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PencilJson {
    domain: Domain,
    h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interfacing: Option<Interfacing>,
    form: PencilForm,
    nu: usize,
    mu: usize,
    e: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

/// Delay pencil modelling extrapolated interfacing as a pure one-step lag
/// of the algebraic variables.
///
/// The characteristic matrix is
/// `s I - A0 + A1 exp(-s h)` in the dense form and
/// `s E - A0 - A1 exp(-s h)` in the sparse block form, where the stored A1
/// is the delayed coefficient of the respective formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayPencil {
    e: DMatrix<f64>,
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    h: f64,
    form: PencilForm,
    nu: usize,
    mu: usize,
}

impl DelayPencil {
    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn form(&self) -> PencilForm {
        self.form
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    fn delay_sign(&self) -> f64 {
        match self.form {
            PencilForm::Dense => 1.0,
            PencilForm::Sparse => -1.0,
        }
    }

    /// Characteristic matrix at a complex frequency s.
    pub fn characteristic(&self, s: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        let lag = (-s * self.h).exp() * self.delay_sign();
        DMatrix::from_fn(n, n, |i, j| {
            s * self.e[(i, j)] - self.a0[(i, j)] + lag * self.a1[(i, j)]
        })
    }

    /// Derivative of the characteristic matrix with respect to s.
    pub fn characteristic_ds(&self, s: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        let lag = (-s * self.h).exp() * self.delay_sign() * (-self.h);
        DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(self.e[(i, j)], 0.0) + lag * self.a1[(i, j)]
        })
    }
}

/// C_r = sum_{j=0}^{r} ((h/2) f_x)^j evaluated by the recursion
/// C_r = I + (h/2) C_{r-1} f_x, which costs r multiplications and avoids
/// explicit matrix powers.
pub fn compute_cr(fx: &DMatrix<f64>, h: f64, r: usize) -> Result<DMatrix<f64>> {
    Ok(cr_pair(fx, h, r)?.1)
}

/// Returns (C_{r-1}, C_r); C_{-1} is the zero matrix by convention so that
/// r = 0 (predictor only, no corrector) drops every corrector term.
pub fn cr_pair(fx: &DMatrix<f64>, h: f64, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if fx.nrows() != fx.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "f_x must be square, got {}x{}",
            fx.nrows(),
            fx.ncols()
        )));
    }
    if h < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step size must be nonnegative, got {h}"
        )));
    }
    let n = fx.nrows();
    let eye = DMatrix::identity(n, n);
    let mut prev = DMatrix::zeros(n, n);
    let mut current = eye.clone();
    for _ in 0..r {
        let next = &eye + (&current * fx) * (0.5 * h);
        prev = std::mem::replace(&mut current, next);
    }
    Ok((prev, current))
}

fn require_positive_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "step size must be positive and finite, got {h}"
        )))
    }
}

/// Reference pencil of the linearized DAE itself.
///
/// Sparse: s E - A with E = diag(I, 0) and the full Jacobian block matrix.
/// Dense: s I - A_s over the dynamic unknowns only (requires invertible
/// g_y). Both share their finite eigenvalues; the sparse form adds the
/// infinite eigenvalue with multiplicity mu.
pub fn pencil_dae(ssm: &SmallSignalModel, form: PencilForm) -> Result<Pencil> {
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let (e, a) = match form {
        PencilForm::Sparse => {
            let n = nu + mu;
            let mut e = DMatrix::zeros(n, n);
            e.view_mut((0, 0), (nu, nu))
                .copy_from(&DMatrix::identity(nu, nu));
            let mut a = DMatrix::zeros(n, n);
            linalg::set_block(&mut a, 0, 0, ssm.fx());
            linalg::set_block(&mut a, 0, nu, ssm.fy());
            linalg::set_block(&mut a, nu, 0, ssm.gx());
            linalg::set_block(&mut a, nu, nu, ssm.gy());
            (e, a)
        }
        PencilForm::Dense => (DMatrix::identity(nu, nu), ssm.state_matrix()?),
    };
    Ok(Pencil {
        e,
        a,
        domain: Domain::S,
        h: 0.0,
        r: None,
        interfacing: None,
        form,
        nu,
        mu,
    })
}

/// One-step pencil of the Heun PC scheme with extrapolated interfacing
/// (y_int = y_n); r = 0 is the bare forward-Euler predictor.
pub fn pencil_pc_extrapolation(
    ssm: &SmallSignalModel,
    h: f64,
    r: usize,
    form: PencilForm,
) -> Result<Pencil> {
    require_positive_h(h)?;
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let cr = compute_cr(ssm.fx(), h, r)?;
    let top_left = DMatrix::identity(nu, nu) + (&cr * ssm.fx()) * h;
    let top_right = (&cr * ssm.fy()) * h;
    let (e, a) = match form {
        PencilForm::Sparse => assemble_z_sparse(ssm, None, &top_left, &top_right),
        PencilForm::Dense => {
            let a_s = ssm.state_matrix()?;
            let a = DMatrix::identity(nu, nu) + (&cr * a_s) * h;
            (DMatrix::identity(nu, nu), a)
        }
    };
    Ok(Pencil {
        e,
        a,
        domain: Domain::Z,
        h,
        r: Some(r),
        interfacing: Some(Interfacing::Extrapolation),
        form,
        nu,
        mu,
    })
}

/// One-step pencil of the Heun PC scheme under perfect interfacing
/// (y_int = y_{n+1}), with B = (h/2) C_{r-1}.
pub fn pencil_pc_perfect(
    ssm: &SmallSignalModel,
    h: f64,
    r: usize,
    form: PencilForm,
) -> Result<Pencil> {
    require_positive_h(h)?;
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let (c_prev, cr) = cr_pair(ssm.fx(), h, r)?;
    let b = c_prev * (0.5 * h);
    let top_left = DMatrix::identity(nu, nu) + (&cr * ssm.fx()) * h;
    let top_right = (&cr * h - &b) * ssm.fy();
    let (e, a) = match form {
        PencilForm::Sparse => {
            let e_top_right = -(&b * ssm.fy());
            assemble_z_sparse(ssm, Some(&e_top_right), &top_left, &top_right)
        }
        PencilForm::Dense => {
            let w = gy_solve_gx(ssm)?;
            let a_s = ssm.fx() - ssm.fy() * &w;
            let m = &b * ssm.fy() * &w;
            let e = DMatrix::identity(nu, nu) + &m;
            let a = DMatrix::identity(nu, nu) + (&cr * a_s) * h + &m;
            (e, a)
        }
    };
    Ok(Pencil {
        e,
        a,
        domain: Domain::Z,
        h,
        r: Some(r),
        interfacing: Some(Interfacing::Perfect),
        form,
        nu,
        mu,
    })
}

fn gy_solve_gx(ssm: &SmallSignalModel) -> Result<DMatrix<f64>> {
    if ssm.mu() == 0 {
        return Ok(DMatrix::zeros(0, ssm.nu()));
    }
    linalg::solve_checked(ssm.gy(), ssm.gx(), 1e-12, |rc| {
        Error::SingularAlgebraicJacobian { rcond: rc }
    })
}

/// Assembles the sparse Z-domain pair
/// E' = [[I, e_top_right], [gx, gy]], A' = [[top_left, top_right], [0, 0]].
fn assemble_z_sparse(
    ssm: &SmallSignalModel,
    e_top_right: Option<&DMatrix<f64>>,
    top_left: &DMatrix<f64>,
    top_right: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let n = nu + mu;
    let mut e = DMatrix::zeros(n, n);
    e.view_mut((0, 0), (nu, nu))
        .copy_from(&DMatrix::identity(nu, nu));
    if let Some(tr) = e_top_right {
        linalg::set_block(&mut e, 0, nu, tr);
    }
    linalg::set_block(&mut e, nu, 0, ssm.gx());
    linalg::set_block(&mut e, nu, nu, ssm.gy());
    let mut a = DMatrix::zeros(n, n);
    linalg::set_block(&mut a, 0, 0, top_left);
    linalg::set_block(&mut a, 0, nu, top_right);
    (e, a)
}

/// Delay pencil of the one-step-lag approximation of extrapolated
/// interfacing.
pub fn pencil_delay(ssm: &SmallSignalModel, h: f64, form: PencilForm) -> Result<DelayPencil> {
    if h < 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delay must be nonnegative and finite, got {h}"
        )));
    }
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let (e, a0, a1) = match form {
        PencilForm::Dense => {
            let w = gy_solve_gx(ssm)?;
            (
                DMatrix::identity(nu, nu),
                ssm.fx().clone(),
                ssm.fy() * &w,
            )
        }
        PencilForm::Sparse => {
            let n = nu + mu;
            let mut e = DMatrix::zeros(n, n);
            e.view_mut((0, 0), (nu, nu))
                .copy_from(&DMatrix::identity(nu, nu));
            let mut a0 = DMatrix::zeros(n, n);
            linalg::set_block(&mut a0, 0, 0, ssm.fx());
            linalg::set_block(&mut a0, nu, 0, ssm.gx());
            linalg::set_block(&mut a0, nu, nu, ssm.gy());
            let mut a1 = DMatrix::zeros(n, n);
            linalg::set_block(&mut a1, 0, nu, ssm.fy());
            (e, a0, a1)
        }
    };
    Ok(DelayPencil {
        e,
        a0,
        a1,
        h,
        form,
        nu,
        mu,
    })
}

/// Companion-form pencil z E - A of a k-step Adams-Bashforth PC scheme.
///
/// The update x_{n+1} = sum_j (R_j x_{n-j+1} + Q_j y_{n-j+1}) is obtained by
/// substituting the linearized predictor into the linearized corrector r
/// times; R_j, Q_j are accumulated numerically by that same recursion. The
/// stacked k-block history vector then obeys E u_{n+1} = A u_n with
/// E = [[0, I], [K, -H]], A = [[I, 0], [0, H_k]].
pub fn adams_companion(ssm: &SmallSignalModel, scheme: &PcScheme, h: f64) -> Result<Pencil> {
    require_positive_h(h)?;
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let k = scheme.k();
    let c = scheme.predictor_history_weights();
    let b = scheme.b();
    if c.len() != k || b.len() != k + 1 {
        return Err(Error::CoefficientMismatch(format!(
            "scheme carries {} predictor and {} corrector coefficients for k = {k}",
            c.len(),
            b.len()
        )));
    }

    let eye = DMatrix::identity(nu, nu);
    // State/algebraic coefficients of xi^(i) on the history values, plus the
    // coefficient t on y_int. Index m = 0 holds the newest history point.
    let mut p: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    let mut s: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    for m in 0..k {
        let cj = c[k - 1 - m];
        let mut pm = ssm.fx() * (h * cj);
        if m == 0 {
            pm += &eye;
        }
        p.push(pm);
        s.push(ssm.fy() * (h * cj));
    }
    let mut t = DMatrix::zeros(nu, mu);

    let hbk = h * b[k];
    for _ in 0..scheme.r() {
        let mut p_next = Vec::with_capacity(k);
        let mut s_next = Vec::with_capacity(k);
        for m in 0..k {
            let bj = b[k - 1 - m];
            let mut pm = ssm.fx() * (h * bj) + ssm.fx() * &p[m] * hbk;
            if m == 0 {
                pm += &eye;
            }
            p_next.push(pm);
            s_next.push(ssm.fy() * (h * bj) + ssm.fx() * &s[m] * hbk);
        }
        t = ssm.fy() * hbk + ssm.fx() * &t * hbk;
        p = p_next;
        s = s_next;
    }

    // Fold the y_int coefficient according to the interfacing strategy:
    // extrapolation adds it to the newest algebraic column, perfect
    // interfacing moves it to the E side next to the identity block.
    let mut k_ul_tr = DMatrix::zeros(nu, mu);
    match scheme.interfacing() {
        Interfacing::Extrapolation => s[0] += &t,
        Interfacing::Perfect => k_ul_tr = -&t,
    }

    let d = nu + mu;
    let mut k_mat = DMatrix::zeros(d, d);
    k_mat
        .view_mut((0, 0), (nu, nu))
        .copy_from(&DMatrix::identity(nu, nu));
    linalg::set_block(&mut k_mat, 0, nu, &k_ul_tr);
    linalg::set_block(&mut k_mat, nu, 0, ssm.gx());
    linalg::set_block(&mut k_mat, nu, nu, ssm.gy());

    let h_block = |m: usize| -> DMatrix<f64> {
        let mut hm = DMatrix::zeros(d, d);
        linalg::set_block(&mut hm, 0, 0, &p[m]);
        linalg::set_block(&mut hm, 0, nu, &s[m]);
        hm
    };

    let n = k * d;
    let mut e = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    if k == 1 {
        linalg::set_block(&mut e, 0, 0, &k_mat);
        linalg::set_block(&mut a, 0, 0, &h_block(0));
    } else {
        let shift = (k - 1) * d;
        e.view_mut((0, d), (shift, shift))
            .copy_from(&DMatrix::identity(shift, shift));
        linalg::set_block(&mut e, shift, 0, &k_mat);
        for m in 0..k - 1 {
            let hm = -h_block(m);
            linalg::set_block(&mut e, shift, (m + 1) * d, &hm);
        }
        a.view_mut((0, 0), (shift, shift))
            .copy_from(&DMatrix::identity(shift, shift));
        linalg::set_block(&mut a, shift, shift, &h_block(k - 1));
    }

    Ok(Pencil {
        e,
        a,
        domain: Domain::Z,
        h,
        r: Some(scheme.r()),
        interfacing: Some(scheme.interfacing()),
        form: PencilForm::Sparse,
        nu,
        mu,
    })
}

/// Z-domain pencil for an arbitrary PC scheme: the dedicated Heun
/// constructors when the coefficients are Heun's, the companion form
/// otherwise (which is always a sparse block assembly).
pub fn zpencil_for_scheme(
    ssm: &SmallSignalModel,
    scheme: &PcScheme,
    h: f64,
    form: PencilForm,
) -> Result<Pencil> {
    if scheme.is_heun() {
        match scheme.interfacing() {
            Interfacing::Extrapolation => pencil_pc_extrapolation(ssm, h, scheme.r(), form),
            Interfacing::Perfect => pencil_pc_perfect(ssm, h, scheme.r(), form),
        }
    } else {
        adams_companion(ssm, scheme, h)
    }
}

/// Exact one-step update matrix T with (x_{n+1}, y_{n+1}) = T (x_n, y_n)
/// for the Heun PC scheme, obtained by eliminating y_{n+1} through the
/// algebraic rows. Its eigenvalues, zeros from the defective algebraic
/// rows aside, are the finite eigenvalues of the matching pencil.
pub fn hm_step_map(
    ssm: &SmallSignalModel,
    h: f64,
    r: usize,
    interfacing: Interfacing,
) -> Result<DMatrix<f64>> {
    if h < 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step size must be nonnegative and finite, got {h}"
        )));
    }
    if ssm.mu() > 0 {
        let rc = linalg::rcond(ssm.gy());
        if rc < 1e-12 {
            return Err(Error::SingularAlgebraicJacobian { rcond: rc });
        }
    }
    let pencil = match interfacing {
        Interfacing::Extrapolation => {
            pencil_sparse_any_h(ssm, h, r, Interfacing::Extrapolation)?
        }
        Interfacing::Perfect => pencil_sparse_any_h(ssm, h, r, Interfacing::Perfect)?,
    };
    linalg::solve_checked(pencil.e(), pencil.a(), 1e-14, |rc| {
        match interfacing {
            Interfacing::Perfect => Error::SingularMassMatrix { rcond: rc },
            Interfacing::Extrapolation => Error::SingularAlgebraicJacobian { rcond: rc },
        }
    })
}

// Same assembly as the public constructors but tolerating h = 0, where the
// map degenerates to the identity on the states.
fn pencil_sparse_any_h(
    ssm: &SmallSignalModel,
    h: f64,
    r: usize,
    interfacing: Interfacing,
) -> Result<Pencil> {
    let (nu, mu) = (ssm.nu(), ssm.mu());
    let (c_prev, cr) = cr_pair(ssm.fx(), h, r)?;
    let top_left = DMatrix::identity(nu, nu) + (&cr * ssm.fx()) * h;
    let (e, a) = match interfacing {
        Interfacing::Extrapolation => {
            let top_right = (&cr * ssm.fy()) * h;
            assemble_z_sparse(ssm, None, &top_left, &top_right)
        }
        Interfacing::Perfect => {
            let b = c_prev * (0.5 * h);
            let top_right = (&cr * h - &b) * ssm.fy();
            let e_top_right = -(&b * ssm.fy());
            assemble_z_sparse(ssm, Some(&e_top_right), &top_left, &top_right)
        }
    };
    Ok(Pencil {
        e,
        a,
        domain: Domain::Z,
        h,
        r: Some(r),
        interfacing: Some(interfacing),
        form: PencilForm::Sparse,
        nu,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn cr_recursion_matches_hand_values() {
        let fx = DMatrix::from_row_slice(1, 1, &[-2.0]);
        assert_eq!(compute_cr(&fx, 0.1, 0).unwrap()[(0, 0)], 1.0);
        assert_relative_eq!(compute_cr(&fx, 0.1, 1).unwrap()[(0, 0)], 0.9, epsilon = 1e-15);
        assert_relative_eq!(
            compute_cr(&fx, 0.1, 2).unwrap()[(0, 0)],
            0.91,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cr_pair_convention_at_r0() {
        let fx = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -3.0]);
        let (prev, cur) = cr_pair(&fx, 0.05, 0).unwrap();
        assert_eq!(prev, DMatrix::zeros(2, 2));
        assert_eq!(cur, DMatrix::identity(2, 2));
    }

    #[test]
    fn dae_pencil_forms() {
        let ssm = fixtures::scalar_dae_default_ssm();
        let dense = pencil_dae(&ssm, PencilForm::Dense).unwrap();
        assert_eq!(dense.dim(), 1);
        assert_relative_eq!(dense.a()[(0, 0)], -1.0, epsilon = 1e-14);
        assert_eq!(dense.e()[(0, 0)], 1.0);

        let sparse = pencil_dae(&ssm, PencilForm::Sparse).unwrap();
        assert_eq!(sparse.dim(), 2);
        assert_eq!(sparse.e()[(0, 0)], 1.0);
        assert_eq!(sparse.e()[(1, 1)], 0.0);
        assert_eq!(sparse.a()[(0, 0)], -2.0);
        assert_eq!(sparse.a()[(0, 1)], 1.0);
        assert_eq!(sparse.a()[(1, 0)], 1.0);
        assert_eq!(sparse.a()[(1, 1)], -1.0);
    }

    #[test]
    fn dae_pencil_mu_zero_forms_coincide() {
        let ssm = fixtures::scalar_test_ssm(-2.0);
        let dense = pencil_dae(&ssm, PencilForm::Dense).unwrap();
        let sparse = pencil_dae(&ssm, PencilForm::Sparse).unwrap();
        assert_eq!(dense.e(), sparse.e());
        assert_eq!(dense.a(), sparse.a());
    }

    #[test]
    fn heun_extrapolation_scalar_growth() {
        let ssm = fixtures::scalar_test_ssm(-2.0);
        let p = pencil_pc_extrapolation(&ssm, 0.1, 1, PencilForm::Dense).unwrap();
        assert_relative_eq!(p.a()[(0, 0)], 0.82, epsilon = 1e-15);
        let perfect = pencil_pc_perfect(&ssm, 0.1, 1, PencilForm::Dense).unwrap();
        assert_relative_eq!(perfect.a()[(0, 0)], 0.82, epsilon = 1e-15);
        assert_relative_eq!(perfect.e()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_fy_makes_interfacing_irrelevant() {
        let ssm = crate::model::SmallSignalModel::new(
            DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -5.0]),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
        )
        .unwrap();
        let ext = pencil_pc_extrapolation(&ssm, 0.05, 2, PencilForm::Sparse).unwrap();
        let per = pencil_pc_perfect(&ssm, 0.05, 2, PencilForm::Sparse).unwrap();
        assert_eq!(ext.e(), per.e());
        assert_eq!(ext.a(), per.a());
    }

    #[test]
    fn adams_k1_equals_heun_pencil_exactly() {
        let ssm = fixtures::scalar_dae_default_ssm();
        for interfacing in [Interfacing::Extrapolation, Interfacing::Perfect] {
            let scheme = PcScheme::adams_bashforth(1, 2, interfacing).unwrap();
            assert!(scheme.is_heun());
            let companion = adams_companion(&ssm, &scheme, 0.1).unwrap();
            let heun = match interfacing {
                Interfacing::Extrapolation => {
                    pencil_pc_extrapolation(&ssm, 0.1, 2, PencilForm::Sparse).unwrap()
                }
                Interfacing::Perfect => {
                    pencil_pc_perfect(&ssm, 0.1, 2, PencilForm::Sparse).unwrap()
                }
            };
            assert!((companion.e() - heun.e()).amax() <= 1e-14);
            assert!((companion.a() - heun.a()).amax() <= 1e-14);
        }
    }

    #[test]
    fn ab2_predictor_weights() {
        let scheme = PcScheme::adams_bashforth(2, 1, Interfacing::Extrapolation).unwrap();
        let c = scheme.predictor_history_weights();
        assert_relative_eq!(c[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(c[1], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn coefficient_tables_are_validated() {
        let err = PcScheme::custom(
            2,
            1,
            Interfacing::Extrapolation,
            vec![1.0],
            vec![0.5, 0.5, 0.0],
        )
        .unwrap_err();
        assert_eq!(err.name(), "CoefficientMismatch");
        assert!(PcScheme::adams_bashforth(5, 1, Interfacing::Extrapolation).is_err());
    }

    #[test]
    fn delay_pencil_dense_coefficients() {
        let ssm = fixtures::scalar_dae_ssm(-2.0, 1.0, 1.0, 1.0);
        let dp = pencil_delay(&ssm, 0.1, PencilForm::Dense).unwrap();
        assert_eq!(dp.a0()[(0, 0)], -2.0);
        assert_relative_eq!(dp.a1()[(0, 0)], 1.0, epsilon = 1e-14);
        // characteristic at s = 0: -A0 + A1 = 2 + 1 = 3
        let m = dp.characteristic(Complex64::new(0.0, 0.0));
        assert_relative_eq!(m[(0, 0)].re, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn step_map_scalar_heun() {
        let ssm = fixtures::scalar_test_ssm(-2.0);
        let t = hm_step_map(&ssm, 0.1, 1, Interfacing::Extrapolation).unwrap();
        assert_relative_eq!(t[(0, 0)], 0.82, epsilon = 1e-15);
    }

    #[test]
    fn step_map_zero_h_is_identity_on_states() {
        let ssm = fixtures::scalar_dae_default_ssm();
        for interfacing in [Interfacing::Extrapolation, Interfacing::Perfect] {
            let t = hm_step_map(&ssm, 0.0, 1, interfacing).unwrap();
            assert_relative_eq!(t[(0, 0)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn perfect_dense_with_singular_mass_side() {
        // M = (h/2) fy gy^{-1} gx = -1 makes I + M vanish while the other
        // side stays away from zero.
        let ssm = fixtures::scalar_dae_ssm(-2.0, 4.0, 1.0, -1.0);
        let p = pencil_pc_perfect(&ssm, 0.5, 1, PencilForm::Dense).unwrap();
        assert_eq!(p.e()[(0, 0)], 0.0);
        let err = p.standard_form().unwrap_err();
        assert_eq!(err.name(), "SingularMassMatrix");
        // The generalized eigenproblem still resolves: every eigenvalue of
        // z*0 - A' sits at infinity.
        let spec = crate::spectra::pencil_spectrum(&p).unwrap();
        assert_eq!(spec.infinite_multiplicity(), 1);
    }

    #[test]
    fn pencil_json_round_trip() {
        let ssm = fixtures::scalar_dae_default_ssm();
        let p = pencil_pc_perfect(&ssm, 0.01, 2, PencilForm::Sparse).unwrap();
        let text = p.to_json();
        assert!(text.contains("\"domain\": \"Z\""));
        assert!(text.contains("\"interfacing\": \"perfect\""));
        let q = Pencil::from_json(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn scheme_labels() {
        assert_eq!(PcScheme::heun(0, Interfacing::Extrapolation).label(), "fem");
        assert_eq!(
            PcScheme::heun(2, Interfacing::Perfect).label(),
            "hm_r2_perfect"
        );
        assert_eq!(
            PcScheme::adams_bashforth(2, 1, Interfacing::Extrapolation)
                .unwrap()
                .label(),
            "ab2_r1_ext"
        );
    }
}
