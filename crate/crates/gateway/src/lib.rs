//! Chat-completion backends, prompt templates and stage-output parsing.

mod backend;
mod config;
mod error;
mod http;
mod message;
mod mock;
mod parse;
mod templates;

pub use backend::{request_key, ChatBackend, FnBackend, RecordingBackend, TranscriptBackend, TranscriptEntry};
pub use config::{BackendKind, BackendPool, BackendSpec, GatewayConfig};
pub use error::{GatewayError, Result};
pub use http::{BackendConfig, HttpBackend, RetryPolicy};
pub use message::{Completion, Message, Role, Usage};
pub use mock::{split_sentences, ScriptedBackend};
pub use parse::{
    parse_clarification, parse_stage_output, parse_typed_segments, parse_unit_list, parse_verdict, Clarification,
    ParsedOutput, TagTable,
};
pub use templates::{Example, Identified, PromptLibrary, Stage, Template, DEFAULT_LANGUAGE};
