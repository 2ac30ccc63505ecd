//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by library operations.
#[derive(Error, Debug, Clone)]
pub enum Error {
    /// Rejected input (precondition violation).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A covariance matrix failed the symmetry/PSD invariant.
    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),

    /// Mismatched dimensions between operands.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A dense tensor would exceed the configured memory guard.
    #[error("tensor of {required} entries exceeds the memory guard of {guard}")]
    MemoryGuard { required: usize, guard: usize },

    /// The outlier filter removed everything or otherwise could not finish.
    #[error("filter failure: {0}")]
    FilterFailure(String),

    /// A moment-matrix candidate violated a pseudo-moment invariant.
    #[error("moment matrix rejected: {0}")]
    OracleRejected(String),

    /// Neither separator case of the thin-direction dichotomy applies.
    #[error("separator construction failed: {0}")]
    SeparatorFailure(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    Empty(String),

    /// The pipeline produced no usable hypothesis.
    #[error("pipeline failure: {0}")]
    PipelineFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
