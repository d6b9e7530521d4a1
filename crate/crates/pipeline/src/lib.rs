//! Batch extraction, structure detection and clarification of a corpus.
//!
//! Model outputs are located back in their source text by [`align`]; only
//! units that align exactly or with flagged drift reach the output. Runs
//! checkpoint as they go and can be resumed.

pub mod align;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod process;
pub mod run;
pub mod stats;

pub use align::{align_extractive, align_within, AlignStatus, AlignmentResult, FUZZY_THRESHOLD};
pub use config::{PipelineConfig, StageBackends};
pub use diagnostics::{clarification_diagnostics, Diagnostics};
pub use error::{PipelineError, Result};
pub use process::{process_contribution, Counters, Outcome, QuarantineEntry, StageContext};
pub use run::{run_corpus, RunOptions, RunReport, RunStatus, RunSummary};
pub use stats::{corpus_stats, CorpusStats, StatsRow};
