use thiserror::Error;

use crate::llmclient::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid sample {id}: {message}")]
    Validation { id: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Provider {
        stage: String,
        #[source]
        source: ProviderError,
    },

    #[error("refusing to resume: {0}")]
    Resume(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { id: id.into(), message: message.into() }
    }

    pub(crate) fn provider(stage: impl Into<String>, source: ProviderError) -> Self {
        Error::Provider { stage: stage.into(), source }
    }
}
