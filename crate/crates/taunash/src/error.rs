use thiserror::Error;

/// Crate-wide error taxonomy. The CLI maps these onto exit codes:
/// config/input problems exit 2, everything numeric exits 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model domain error: {0}")]
    ModelDomain(String),
    #[error("invariant measure not normalizable: {0}")]
    NotNormalizable(String),
    #[error("discretization error: {0}")]
    Discretization(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
