use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported channel: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("blocklength {n} is below the validity threshold {n_min}")]
    BelowValidity { n: u64, n_min: u64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size cap exceeded: {0}")]
    CapExceeded(String),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
