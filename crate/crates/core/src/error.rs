//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EitError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("empty support: {0}")]
    EmptySupport(String),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EitError>;
