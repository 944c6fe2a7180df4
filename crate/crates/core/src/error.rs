use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the command-line front end.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("size mismatch in {}: expected {expected} bytes, found {found}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {} at element {index}", path.display())]
    NonFinite { path: PathBuf, index: usize },

    #[error("alignment violation: {0}")]
    Alignment(String),

    #[error("frame too large: {positions} tokens per frame exceeds the limit of {limit}")]
    FrameTooLarge { positions: usize, limit: usize },

    #[error("malformed manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("rollout file line {line}: {message}")]
    RolloutParse { line: usize, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::MissingFile(_) => exit_code::IO,
            _ => exit_code::VALIDATION,
        }
    }
}
