use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("unknown theme {0:?}")]
    UnknownTheme(String),
    #[error("record references contribution {record:?} but was checked against {contribution:?}")]
    ContributionMismatch { record: String, contribution: String },
    #[error("line {line}: {message}")]
    Input { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty token set")]
    EmptySet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
