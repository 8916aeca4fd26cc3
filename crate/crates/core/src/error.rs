use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed text input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates a data invariant.
    #[error("validation error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },

    /// Arguments outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Wrong magic bytes, version or layout in a binary container.
    #[error("format error: {0}")]
    Format(String),

    /// A binary container ends before its declared contents.
    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("alignment error: id `{0}` not found in embedding matrix")]
    Alignment(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            message: msg.into(),
        }
    }

    pub(crate) fn invalid_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Validation {
            line: Some(line),
            message: msg.into(),
        }
    }
}
