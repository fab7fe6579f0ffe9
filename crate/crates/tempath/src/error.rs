//! Crate-wide error type and the CLI exit-code contract.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown {kind} name: {name}")]
    UnknownName { kind: &'static str, name: String },
    #[error("training error: {0}")]
    Training(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code contract: 0 ok, 1 internal, 2 input, 3 checkpoint, 4 query resolution.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Vocab(_)
            | Error::Config { .. }
            | Error::DatasetNotFound(_)
            | Error::Io { .. } => 2,
            Error::Checkpoint(_) | Error::Dimension(_) => 3,
            Error::UnknownName { .. } => 4,
            Error::Training(_) | Error::Invalid(_) => 1,
        }
    }

    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}
