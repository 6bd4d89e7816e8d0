use std::path::PathBuf;

use thiserror::Error;

use crate::model::TokenId;

/// Errors produced anywhere in the extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or record does not follow the interchange schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A reference (token, line, page) does not resolve.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A label outside the closed entity/tag vocabulary.
    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    /// Invalid numeric or structural input to an algorithm.
    #[error("invalid input: {0}")]
    Input(String),

    /// Two spans claim the same token where that cannot be expressed.
    #[error("conflicting spans: {first} and {second} share token {token}")]
    Conflict {
        first: String,
        second: String,
        token: TokenId,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for the error classes the CLI maps to exit status 1.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_) | Error::Integrity(_) | Error::UnknownLabel(_) | Error::Json { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
