use thiserror::Error;

/// Errors surfaced by the library. CLI exit codes are derived from these:
/// config/usage problems map to 2, numeric failures to 3.
#[derive(Debug, Error)]
pub enum OsgoodError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("evaluation budget exceeded: {0}")]
    Budget(String),

    #[error("trajectory does not cover x = {0}")]
    OutOfRange(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OsgoodError>;
