use thiserror::Error;

/// Errors raised across the solver suite.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BsepError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("structure violation ({what}): deviation {deviation:.3e}")]
    StructureViolation { what: &'static str, deviation: f64 },

    #[error("vector of odd length {0} cannot be split into halves")]
    OddLength(usize),

    #[error("non-finite entry in matrix data")]
    NonFinite,

    #[error("size {n} exceeds the dense limit {cap}")]
    SizeLimitExceeded { n: usize, cap: usize },

    #[error("isotropic vector at position {position}: |a^H J a| = {form:.3e}, |a|^2 = {norm2:.3e}")]
    IsotropicVector { position: usize, form: f64, norm2: f64 },

    #[error("no admissible pivot for the Householder-like transform")]
    NoValidPivot,

    #[error("hyperbolic rotation does not exist at index {index} (|alpha| = |beta|)")]
    HyperbolicBreakdown { index: usize },

    #[error("vanishing leading principal minor detected at column {column}")]
    PrincipalMinorBreakdown { column: usize },

    #[error("matrix is numerically rank deficient (ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("QR iteration did not converge after {sweeps} sweeps ({remaining} indices left)")]
    MaxIterationsExceeded { sweeps: usize, remaining: usize },

    #[error("shift is an exact eigenvalue and no null direction could be recovered")]
    SingularShift,

    #[error("inverse iteration did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("zero vector supplied")]
    ZeroVector,

    #[error("start vector is not positive in the indefinite inner product")]
    IsotropicStart,

    #[error("Lanczos state has no completed steps")]
    EmptyState,

    #[error("small eigenproblem failed: {0}")]
    SmallSolveFailure(String),

    #[error("reference eigensolver failed: {0}")]
    ConvergenceFailure(String),

    #[error("relative error undefined for a zero reference value")]
    ZeroReference,

    #[error("eigenvalue {value} has no partner (defect {defect:.3e})")]
    UnpairedEigenvalue { value: String, defect: f64 },

    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    #[error("unsupported Matrix Market field: {0}")]
    UnsupportedField(String),

    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BsepError>;

impl From<std::io::Error> for BsepError {
    fn from(e: std::io::Error) -> Self {
        BsepError::Io(e.to_string())
    }
}
