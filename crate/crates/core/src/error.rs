use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KgeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("id out of range: {0}")]
    Range(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// A caller broke an operation's preconditions (bad lengths, non-finite
    /// inputs, out-of-vocabulary tokens).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss at step {step} (batch triple indices {batch:?})")]
    NonFiniteLoss { step: u64, batch: Vec<usize> },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KgeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        KgeError::Contract(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        KgeError::Validation(msg.into())
    }
}
