use thiserror::Error;

use crate::templates::Stage;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing placeholder {0}")]
    MissingPlaceholder(String),
    #[error("no template for stage {stage:?}, language {language}, variant {variant}")]
    UnknownTemplate { stage: Stage, language: String, variant: String },
    #[error("template for {stage:?} lacks placeholder {placeholder}")]
    TemplateIncomplete { stage: Stage, placeholder: String },
    #[error("cannot parse {stage:?} output: {message}")]
    Parse { stage: Stage, message: String, raw: String },
    #[error("backend {backend} returned HTTP {status}: {body}")]
    Http { backend: String, status: u16, body: String },
    #[error("backend {backend}: protocol error: {message}")]
    Protocol { backend: String, message: String },
    #[error("backend {backend}: {attempts} attempts failed; last: {last}")]
    RetriesExhausted { backend: String, attempts: u32, last_status: Option<u16>, last: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("unknown backend {0}")]
    UnknownBackend(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("backend {backend}: {message}")]
    Backend { backend: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::RetriesExhausted { .. } | GatewayError::Backend { .. })
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;
