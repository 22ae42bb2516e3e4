//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by measure construction, transport solvers and the
/// descent loop.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions of two objects do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// The pair of representations is not supported by the operation.
    #[error("representation error: {0}")]
    Representation(String),

    /// A matrix was numerically singular or indefinite.
    #[error("conditioning error: {context} (smallest eigenvalue {min_eigenvalue:.3e})")]
    Conditioning {
        context: String,
        min_eigenvalue: f64,
    },

    /// A discrete instance exceeded the configured size cap.
    #[error("capacity error: instance size {size} exceeds cap {cap}")]
    Capacity { size: usize, cap: usize },

    /// Invalid input file or serialized payload.
    #[error("parse error: {0}")]
    Parse(String),

    /// I/O failure while reading inputs or writing outputs.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
