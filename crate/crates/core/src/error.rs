use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("ambiguous regime: delta - 1 = {0:e}")]
    AmbiguousRegime(f64),
    #[error("matrix is reducible")]
    Reducible,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("input too large: {0}")]
    TooLarge(String),
    #[error("bracket failure: {0}")]
    Bracket(String),
    #[error("worker failed on index {index}: {message}")]
    Worker { index: u64, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
