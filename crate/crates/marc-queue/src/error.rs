use thiserror::Error;

/// Errors produced by spec loading, chain construction, analysis and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("state cap exceeded: reached {reached} states (cap {cap})")]
    CapExceeded { reached: usize, cap: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
