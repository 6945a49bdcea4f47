//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by fecgkit operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical procedure failed (singular matrix, divergence, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Malformed file content.
    #[error("parse error: {0}")]
    Parse(String),
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
