use std::path::PathBuf;

use clarify_core::CoreError;
use clarify_gateway::GatewayError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contribution {contribution_id}: {source}")]
    Backend {
        contribution_id: String,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("checkpoint {path} is corrupt: {detail}; rerun with force to discard it")]
    CheckpointCorrupt { path: PathBuf, detail: String },
    #[error("checkpoint in {path} belongs to another corpus or configuration; rerun with force to start over")]
    CheckpointMismatch { path: PathBuf },
    #[error("record refers to unknown contribution {0}")]
    UnknownContribution(String),
    #[error("duplicate contribution id {0}")]
    DuplicateContribution(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
