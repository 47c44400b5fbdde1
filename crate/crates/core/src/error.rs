use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input data does not carry what the requested analysis needs
    /// (e.g. a corpus without logprobs handed to entropy auditing).
    #[error("missing capability: {0}")]
    Capability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Transient transport failure (connection refused, timeout, 5xx, 429).
    #[error("network error: {0}")]
    Network(String),

    /// The endpoint rejected the request; retrying will not help.
    #[error("endpoint rejected request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },

    #[error("endpoint response malformed: {0}")]
    Protocol(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
