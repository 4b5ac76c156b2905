use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown language code `{0}`")]
    UnknownLanguage(String),

    #[error("record `{id}` has no {field}")]
    MissingField { id: String, field: &'static str },

    #[error("{0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("request failed with HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("gave up after {attempts} attempts: {message}")]
    RetriesExhausted {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_network(&self) -> bool {
        matches!(
            self,
            Error::Http { .. } | Error::RetriesExhausted { .. } | Error::Transport(_)
        )
    }
}
