use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its support.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid matrix: {0}")]
    Matrix(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
