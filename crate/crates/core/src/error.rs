//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any stage of the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file does not conform to its binary format (bad magic, version, header).
    #[error("format error: {0}")]
    Format(String),

    /// A file is structurally valid but its payload is truncated or inconsistent.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// An input value violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A computation produced NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation was called in the wrong order (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),

    /// A configuration is unusable (e.g. no positive examples to train on).
    #[error("configuration error: {0}")]
    Config(String),

    /// The synthetic generator could not satisfy its placement constraints.
    #[error("generation error: {0}")]
    Generation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
