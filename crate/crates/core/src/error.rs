use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not non-negative definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is indefinite (min eigenvalue {min_eigenvalue:e})")]
    Indefinite { min_eigenvalue: f64 },

    #[error("coefficient matrix is not non-negative definite at t = {t} (min eigenvalue {min_eigenvalue:e})")]
    NotPsdAt { t: f64, min_eigenvalue: f64 },

    #[error("covariance is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("reversed interval: [{lo}, {hi}]")]
    ReversedInterval { lo: f64, hi: f64 },

    #[error("grid too small on axis {axis}: need half-width {required}, have {actual}")]
    GridTooSmall {
        axis: usize,
        required: f64,
        actual: f64,
    },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid partition: {0}")]
    BadPartition(String),

    #[error("Hypothesis on A violated: off-diagonal block of size {block_norm:e} for p0 = {p0}")]
    HypothesisViolated { p0: usize, block_norm: f64 },

    #[error("mapped support leaves the box on axis {axis} at t = {t}")]
    SupportEscape { axis: usize, t: f64 },

    #[error("time profile must have positive integral (got {integral})")]
    BadProfile { integral: f64 },

    #[error("exponent p = {0} outside (1, inf)")]
    BadExponent(f64),

    #[error("not certified: {0}")]
    NotCertified(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("malformed field file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
