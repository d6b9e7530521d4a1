//! Core of the corpus-clarification workbench.
//!
//! - [`model`]: contributions, argumentative units, annotation records and
//!   their validation.
//! - [`ingest`]: corpus preparation and stratified sampling.
//! - [`textmetrics`]: tokenization, segmentation agreement, span matching,
//!   edit distance and ROUGE.
//! - [`special`]: incomplete beta and gamma functions.
//! - [`quality`]: censored-Beta model of clarification quality.
//! - [`stats`]: goodness-of-fit and binomial tests.
//! - [`clusters`]: cluster assignments, pair sampling and judge tallies.

pub mod clusters;
pub mod error;
pub mod ingest;
pub mod io;
pub mod model;
pub mod quality;
pub mod special;
pub mod stats;
pub mod textmetrics;

pub use error::{CoreError, Result};
pub use model::{
    AnnotationRecord, ArgumentativeUnit, CharSpan, ClarificationEvent, Contribution, ErrorLabel,
    LabeledSegment, Phase, RecordStatus, SegmentType, SkipReason, Theme,
};
