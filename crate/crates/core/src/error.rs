use thiserror::Error;

/// Errors raised by fitting and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basis index {index} out of range ({count} basis functions)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid knot sequence: {0}")]
    InvalidKnots(String),

    #[error("mediator values are constant; cannot place knots")]
    ConstantMediator,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("cone projection did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
