//! Annotation campaign service: accounts, tutorial gating, task leasing with
//! double annotation, clarification regeneration, journaled persistence and
//! export.

pub mod clock;
pub mod config;
pub mod error;
pub mod http;
pub mod journal;
pub mod service;
pub mod state;
pub mod tutorial;

pub use clock::{Clock, ManualClock, Millis, SystemClock};
pub use config::{AccountSpec, CampaignConfig, ServiceConfig};
pub use error::{ServiceError, Result};
pub use http::{router, serve};
pub use journal::{Event, Journal, JournalEntry, Snapshot};
pub use service::{
    Campaign, DraftView, Profile, Progress, RegenerateRequest, Regenerated, Service, ServiceOptions, SubmitRequest,
    SubmitResponse, Task,
};
pub use state::{Draft, ExportFilter, ExportStream, Lease, State, StoredRecord};
pub use tutorial::{builtin_tutorial, load_tutorial, parse_tutorial, tutorial_score, TutorialItem};
