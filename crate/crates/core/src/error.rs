//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! grouped by what the caller can do about them: `Validation`, `Config`,
//! `Shape` and `Format` indicate bad inputs or artifacts; `Numerical` and
//! `Training` indicate runtime failures of the math itself.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Tensor or network shape mismatch. The message names both shapes.
    Shape(String),
    /// A precondition on an operation's arguments was violated.
    Validation(String),
    /// An unknown kind, name, or out-of-range configuration value.
    Config(String),
    /// A serialized artifact (dataset, checkpoint) is malformed.
    /// `offset` is the byte position for binary formats, when known.
    Format {
        offset: Option<u64>,
        message: String,
    },
    /// Numerical failure: non-finite values, eigensolver non-convergence.
    Numerical(String),
    /// A training loop failed (e.g. diverged) at the given epoch and step.
    Training {
        epoch: usize,
        step: usize,
        message: String,
    },
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl Error {
    /// Process exit code for CLI use: 1 for user/input errors, 2 for
    /// runtime or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Format { .. }
            | Error::Json(_) => 1,
            Error::Numerical(_) | Error::Training { .. } | Error::Io(_) => 2,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Format { offset, message } => match offset {
                Some(off) => write!(f, "format error at byte {off}: {message}"),
                None => write!(f, "format error: {message}"),
            },
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Training {
                epoch,
                step,
                message,
            } => write!(f, "training error at epoch {epoch}, step {step}: {message}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
