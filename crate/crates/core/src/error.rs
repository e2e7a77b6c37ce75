use thiserror::Error;

/// Errors produced by the rate control engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of a closed-form relation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data cannot determine the requested quantity.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed external data (CSV rows, JSON documents).
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),

    /// An internal invariant was observed to be broken.
    #[error("invariant breach: {0}")]
    Invariant(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
