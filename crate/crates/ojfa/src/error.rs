//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up for the requested operation.
    #[error("dimension mismatch in {op}: left is {left}, right is {right}")]
    DimMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    /// An operation received an empty vector or empty batch.
    #[error("{0} requires a non-empty input")]
    Empty(&'static str),

    /// A vector with zero Euclidean norm where a direction is required.
    #[error("zero-norm vector passed to {0}")]
    ZeroNorm(&'static str),

    /// A non-finite value (NaN or infinity) appeared where finite math is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A scalar argument is outside its documented range.
    #[error("invalid argument {name}: {message}")]
    InvalidArgument { name: &'static str, message: String },

    /// Configuration validation failed; every violated field is listed.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    /// A token id at or above the configured vocabulary size.
    #[error("token id {token} out of range for vocab size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },

    /// An operation that requires a specific jump mode was called in the other.
    #[error("jump is in {actual} mode but {op} requires {required} mode")]
    WrongMode {
        op: &'static str,
        required: &'static str,
        actual: &'static str,
    },

    /// A strategy references a jump that the bank does not contain.
    #[error("no jump available for {0}")]
    MissingJump(String),

    /// Malformed or truncated binary file; `offset` is the byte position of the problem.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: String,
        offset: u64,
        message: String,
    },

    /// Underlying I/O failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
