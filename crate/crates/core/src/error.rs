use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A trace line could not be decoded as JSON of the expected shape.
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    /// A trace line decoded but broke a field invariant.
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("empty trace")]
    EmptyTrace,

    /// A caller broke an operation precondition (length mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An `EngineConfig` bound does not hold.
    #[error("invalid config: {bound} ({detail})")]
    Config { bound: &'static str, detail: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("config format: {0}")]
    ConfigFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
