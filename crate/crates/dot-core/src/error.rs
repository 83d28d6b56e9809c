//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DotError>;

#[derive(Error, Debug)]
pub enum DotError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl DotError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        DotError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        DotError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
