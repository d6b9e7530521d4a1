use clarify_core::model::Violation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid or missing token")]
    Unauthenticated,
    #[error("admin token required")]
    Forbidden,
    #[error("tutorial not passed")]
    TutorialPending,
    #[error("policy: {0}")]
    Policy(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("record violates {} invariant(s)", .0.len())]
    Violations(Vec<Violation>),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("journal {path}: {detail}")]
    JournalCorrupt { path: String, detail: String },
    #[error("journal was written for another campaign (fingerprint {found}, expected {expected})")]
    CampaignMismatch { found: String, expected: String },
    #[error(transparent)]
    Core(#[from] clarify_core::CoreError),
    #[error(transparent)]
    Gateway(#[from] clarify_gateway::GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Short machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        use ServiceError::*;
        match self {
            Unauthenticated => "unauthenticated",
            Forbidden => "forbidden",
            TutorialPending => "tutorial_pending",
            Policy(_) => "policy",
            Conflict(_) => "conflict",
            NotFound(_) => "not_found",
            BadRequest(_) => "bad_request",
            Violations(_) => "violations",
            Backend(_) => "backend_unavailable",
            _ => "internal",
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
