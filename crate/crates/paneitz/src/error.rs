use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("symmetry {symmetry} is not compatible with {model}")]
    IncompatibleSymmetry { symmetry: String, model: String },
    #[error("mode_count ≥ 8 required (got {0})")]
    InsufficientModes(usize),
    #[error("fields live on different discretizations")]
    DiscretizationMismatch,
    #[error("operator is not positive (min eigenvalue {min_eigenvalue:.6e}); refusing to invert")]
    NotPositive { min_eigenvalue: f64 },
    #[error("non-finite value produced: {0}")]
    NonFinite(String),
    #[error("conformal factor must be positive at every node (min {0:.6e})")]
    NonPositiveFactor(f64),
    #[error("field vanishes identically")]
    ZeroField,
    #[error("step size underflow at t = {t}: dt = {dt:.3e}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("positivity lost at t = {t}: min u = {min_u:.6e}")]
    PositivityLost { t: f64, min_u: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("expansion fit failed: {0}")]
    Fit(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid bubble scales: {0}")]
    Scale(String),
}

pub type Result<T> = std::result::Result<T, Error>;
