//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A referenced agent id does not exist in the league.
    #[error("not found: agent {0}")]
    NotFound(u64),

    /// A configuration key is missing, unknown, or out of range.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A construction would exceed a configured capacity.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A numeric routine produced or encountered a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The store is in a state that does not permit the operation.
    #[error("state error: {0}")]
    State(String),

    /// A pair has no recorded match data (distinct from a payoff of 0).
    #[error("no match data for pair ({0}, {1})")]
    NoData(u64, u64),

    /// Checkpoint schema version does not match this build.
    #[error("checkpoint schema version {found} is not supported (expected {expected}); migrate the file first")]
    Version { found: u64, expected: u64 },

    /// Malformed checkpoint or log file.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
