use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed JSON or an unknown key; serde reports line, column and key.
    #[error("config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },

    #[error(transparent)]
    Core(#[from] periodic_q::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),

    #[error("comparison rejected: {0}")]
    Compare(String),
}

impl HarnessError {
    pub(crate) fn field(field: &'static str, reason: impl Into<String>) -> Self {
        HarnessError::Field {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
