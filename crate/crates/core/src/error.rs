use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid span ({start}, {end}): start exceeds end")]
    InvalidSpan { start: usize, end: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("config: {0}")]
    Config(String),

    #[error("infeasible synthetic config: {0}")]
    Infeasible(String),

    #[error("{table} id {id} out of range (table has {size} rows)")]
    IdOutOfRange { table: &'static str, id: usize, size: usize },

    #[error("labels not known to the model: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFinite { epoch: usize, step: usize, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse { line, reason: reason.into() }
    }
}
