use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (embedding text, dictionary, checkpoint, config).
    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Matrix/tensor dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Evaluation could not be carried out (no evaluable entries, degenerate input).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Refinement could not start (e.g. every induced lexicon is empty).
    #[error("refinement error: {0}")]
    Refinement(String),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
