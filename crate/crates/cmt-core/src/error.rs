//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset ingestion, training, and model I/O.
#[derive(Debug, Error)]
pub enum CmtError {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file did not match the expected format (bad magic, bad version).
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must agree did not (e.g. image/label counts).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Optimization produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A model file is damaged (checksum mismatch, truncation).
    #[error("corrupt model file: {0}")]
    Corruption(String),
}

pub type Result<T> = std::result::Result<T, CmtError>;

impl CmtError {
    fn invalid(msg: impl Into<String>) -> Self {
        CmtError::InvalidArgument(msg.into())
    }
}

/// Shorthand for the most common error path.
pub(crate) fn invalid_argument(msg: impl Into<String>) -> CmtError {
    CmtError::invalid(msg)
}
