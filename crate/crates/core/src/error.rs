use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the EMPH pipeline.
///
/// `Domain` and `Input` are caller mistakes (bad arguments, bad data);
/// `Internal` means two pieces of the pipeline disagree about shapes and
/// indicates a bug rather than bad input.
#[derive(Debug, Error)]
pub enum EmphError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EmphError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EmphError::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        EmphError::Input(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        EmphError::Internal(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EmphError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's data or arguments.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, EmphError::Internal(_))
    }
}

pub type Result<T> = std::result::Result<T, EmphError>;
