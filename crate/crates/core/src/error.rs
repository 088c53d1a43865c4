use thiserror::Error;

/// Errors raised across the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("quantile is infinite at p = {0}")]
    InfiniteQuantile(f64),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("bound correction overflow at standardized value {0}")]
    CorrectionOverflow(f64),

    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("class `{label}` has {size} observations, need at least {required}")]
    ClassTooSmall {
        label: String,
        size: usize,
        required: usize,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
