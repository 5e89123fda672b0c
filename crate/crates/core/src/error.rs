use thiserror::Error;

/// Errors produced by space construction, distortion evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point count {count} exceeds the safety cap of {cap}")]
    PointCapExceeded { count: usize, cap: usize },

    #[error(
        "dimension mismatch: source space has dim {x_dim}, reproduction space has dim {y_dim}"
    )]
    DimensionMismatch { x_dim: usize, y_dim: usize },

    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("degenerate source: unnormalized mass is zero or not finite")]
    DegenerateSource,

    #[error("brute-force oracle refused: M*N = {size} exceeds cap {cap}")]
    OracleCapExceeded { size: usize, cap: usize },

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("inconsistent marginal: column {column} has r = 0 but carries mass {mass:e}")]
    InconsistentMarginal { column: usize, mass: f64 },

    #[error("numerical failure at lambda = {lambda}: {reason}")]
    NumericalFailure { lambda: f64, reason: String },

    #[error("missing cross distance matrix: required when theta < 1 (theta = {theta})")]
    MissingCrossDistance { theta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
