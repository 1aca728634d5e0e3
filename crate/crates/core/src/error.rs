use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
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

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown document id {0:?}")]
    UnknownDoc(String),

    #[error("unknown query id {0:?}")]
    UnknownQuery(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("text produces no features: {0:?}")]
    EmptyEncoding(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("truncated payload")]
    Truncated,

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("count/dim mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("query id mismatch: {left:?} vs {right:?}")]
    QueryMismatch { left: String, right: String },

    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("translation failed: {0}")]
    Translation(String),

    #[error("unknown name {0:?}")]
    UnknownName(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
