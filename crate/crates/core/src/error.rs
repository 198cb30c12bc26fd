//! Error type shared by all modules of the crate.

use num_complex::Complex64;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building models, pencils, spectra
/// or running the time-domain solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An input matrix or vector carries NaN or infinite entries.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// Newton iteration exhausted its budget.
    #[error("no convergence after {max_iter} iterations (residual {residual:.3e})")]
    NonConvergence { max_iter: usize, residual: f64 },

    /// The stacked (nu+mu) Jacobian is numerically rank-deficient.
    #[error("stacked Jacobian is numerically singular (rcond {rcond:.3e})")]
    SingularJacobian { rcond: f64 },

    /// A Jacobian evaluation produced NaN entries.
    #[error("Jacobian evaluation produced non-finite entries")]
    NonFiniteJacobian,

    /// g_y is rank-deficient; dense reductions are invalid.
    #[error("algebraic Jacobian g_y is numerically singular (rcond {rcond:.3e})")]
    SingularAlgebraicJacobian { rcond: f64 },

    /// The mass-side matrix of a generalized pencil cannot be inverted.
    #[error("mass matrix is numerically singular (rcond {rcond:.3e})")]
    SingularMassMatrix { rcond: f64 },

    /// Predictor/corrector coefficient tables disagree with the step count.
    #[error("coefficient mismatch: {0}")]
    CoefficientMismatch(String),

    /// The eigenvalue iteration failed.
    #[error("eigenvalue iteration failed to converge")]
    ConvergenceFailure,

    /// det(sE - A) vanishes identically; the pencil has no discrete spectrum.
    #[error("singular pencil: det(sE - A) vanishes for every shift tried")]
    SingularPencil,

    /// A delay-root Newton run exhausted its budget.
    #[error("no root found from guess {guess} after {max_iter} iterations")]
    NoRootFound { guess: Complex64, max_iter: usize },

    /// z = 0 maps to Re(s) = -inf and has no finite S-plane image.
    #[error("zero eigenvalue has no finite S-plane image")]
    ZeroEigenvalue,

    /// No finite nonzero eigenvalue to work with.
    #[error("spectrum has no finite nonzero eigenvalues")]
    EmptySpectrum,

    /// The reference eigenvalue of a relative metric is zero.
    #[error("reference eigenvalue is zero")]
    ZeroReference,

    /// Stability margin search: already unstable at the lower bracket.
    #[error("spectral radius {radius:.6} >= 1 already at h = {h_lo}")]
    UnstableAtLowerBound { h_lo: f64, radius: f64 },

    /// Accuracy search: criterion violated already at the lower bracket.
    #[error("accuracy criterion violated already at h = {h_lo}")]
    CriterionUnmetAtLowerBound { h_lo: f64 },

    /// A tracked mode could not be matched at some probe step size.
    #[error("target mode {mode} lost while tracking at h = {h}")]
    ModeLost { mode: usize, h: f64 },

    /// Perfect-interfacing repeat loop hit its cap.
    #[error("interface iteration did not converge within {max_repeats} repeats")]
    InterfaceNonConvergence { max_repeats: usize },

    /// Analytic Jacobians were requested but the model has none.
    #[error("model does not provide analytic Jacobians")]
    AnalyticJacobiansUnavailable,

    /// Initial point of a simulation violates g(x, y) = 0.
    #[error("initial point violates the algebraic constraints (|g| = {residual:.3e})")]
    InconsistentInitialState { residual: f64 },

    /// A time step failed; carries the step index and the cause.
    #[error("step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },

    /// Operation applied to a spectrum in the wrong domain.
    #[error("spectrum domain mismatch: expected {expected}")]
    WrongDomain { expected: &'static str },

    /// Caller-supplied parameter is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Model/pencil file could not be read or parsed.
    #[error("file error: {0}")]
    FileFormat(String),
}

impl Error {
    /// Stable machine-readable name of the variant, used in error records.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::NonFiniteJacobian => "NonFiniteJacobian",
            Error::SingularAlgebraicJacobian { .. } => "SingularAlgebraicJacobian",
            Error::SingularMassMatrix { .. } => "SingularMassMatrix",
            Error::CoefficientMismatch(_) => "CoefficientMismatch",
            Error::ConvergenceFailure => "ConvergenceFailure",
            Error::SingularPencil => "SingularPencil",
            Error::NoRootFound { .. } => "NoRootFound",
            Error::ZeroEigenvalue => "ZeroEigenvalue",
            Error::EmptySpectrum => "EmptySpectrum",
            Error::ZeroReference => "ZeroReference",
            Error::UnstableAtLowerBound { .. } => "UnstableAtLowerBound",
            Error::CriterionUnmetAtLowerBound { .. } => "CriterionUnmetAtLowerBound",
            Error::ModeLost { .. } => "ModeLost",
            Error::InterfaceNonConvergence { .. } => "InterfaceNonConvergence",
            Error::AnalyticJacobiansUnavailable => "AnalyticJacobiansUnavailable",
            Error::InconsistentInitialState { .. } => "InconsistentInitialState",
            Error::StepFailed { .. } => "StepFailed",
            Error::WrongDomain { .. } => "WrongDomain",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::FileFormat(_) => "FileFormat",
        }
    }

    /// Name of the innermost cause, unwrapping step wrappers.
    pub fn root_name(&self) -> &'static str {
        match self {
            Error::StepFailed { source, .. } => source.root_name(),
            other => other.name(),
        }
    }
}
