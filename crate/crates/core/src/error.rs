use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HakeError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Data(String),

    #[error("unseen {kind} `{token}` in {split} split (not present in train)")]
    UnseenToken {
        kind: &'static str,
        token: String,
        split: &'static str,
    },

    #[error("{kind} id {id} out of range (have {len})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite gradient in table {table}, row {row}")]
    NonFiniteGradient { table: &'static str, row: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HakeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HakeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input files rather than numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            HakeError::NonFiniteGradient { .. } | HakeError::Numeric(_) | HakeError::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, HakeError>;
