use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text (XML, OBJ, JSON).
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u32,
        column: u32,
        message: String,
    },
    /// A model violates a structural invariant (unknown link, cycle, duplicate name).
    #[error("structural error: {0}")]
    Structural(String),
    /// An argument is outside the accepted set for the operation.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A numeric input is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A processing stage failed to produce usable output.
    #[error("processing error: {0}")]
    Processing(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
