use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("runs have different lengths ({0} and {1} samples)")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Solver(#[from] pssqp::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
