//! Error type shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A physical quantity is outside its mathematical domain (negative rate,
    /// zero temperature, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A single configuration problem (bad grid, mismatched sequence, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Config validation collects every failure, not just the first.
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// Data is structurally unusable for a fit (all abscissas equal, too few
    /// points, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A data file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Json { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 validation, 3 I/O.
    ///
    /// Exit code 2 (fit did not converge) is decided by the CLI from the
    /// `FitResult`, not from an error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
