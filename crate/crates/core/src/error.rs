use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{0}")]
    InvalidInput(String),

    /// Cholesky failed even after the jitter ladder was exhausted.
    #[error("kernel matrix of size {size} is not positive definite (last jitter {jitter:e})")]
    NotPositiveDefinite { size: usize, jitter: f64 },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config field `{field}`: {message}")]
    ConfigField { field: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
