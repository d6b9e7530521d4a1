//! Corpus-level orchestration with resumable checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clarify_core::model::{AnnotationRecord, Contribution, SegmentType};
use clarify_gateway::BackendPool;
use futures::stream::{self, StreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::AlignStatus;
use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::process::{process_contribution, Counters, Outcome, QuarantineEntry, StageContext};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Discard a corrupt or foreign checkpoint instead of refusing to resume.
    pub force: bool,
    /// Stop after this many newly processed contributions, leaving the run resumable.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), force: false, stop_after: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub contributions: u64,
    pub records: u64,
    pub quarantined_contributions: u64,
    pub quarantine_entries: u64,
    pub units: u64,
    pub segments: BTreeMap<SegmentType, u64>,
    #[serde(flatten)]
    pub counters: Counters,
}

impl RunReport {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> Self {
        let mut r = RunReport {
            segments: SegmentType::ALL.iter().map(|t| (*t, 0)).collect(),
            ..RunReport::default()
        };
        for o in outcomes {
            r.contributions += 1;
            r.quarantine_entries += o.quarantine.len() as u64;
            r.counters.add(&o.counters);
            match &o.record {
                Some(rec) => {
                    r.records += 1;
                    r.units += rec.units.len() as u64;
                    for s in rec.segments() {
                        *r.segments.entry(s.kind).or_default() += 1;
                    }
                }
                None => r.quarantined_contributions += 1,
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub processed_now: usize,
    pub resumed: usize,
    /// Present once the run is complete and outputs are written.
    pub report: Option<RunReport>,
}

/// Digest of the corpus content, in id order.
pub fn corpus_fingerprint(corpus: &[Contribution]) -> String {
    let mut sorted: Vec<&Contribution> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut h = Sha256::new();
    for c in sorted {
        h.update(serde_json::to_vec(c).expect("serializable"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Processes every contribution not yet checkpointed, then writes the merged
/// outputs sorted by contribution id.
pub async fn run_corpus(
    corpus: &[Contribution],
    cfg: &PipelineConfig,
    pool: &BackendPool,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let ctx = StageContext::new(cfg.clone(), pool)?;
    let mut seen = BTreeSet::new();
    for c in corpus {
        if !seen.insert(c.id.as_str()) {
            return Err(PipelineError::DuplicateContribution(c.id.clone()));
        }
    }

    std::fs::create_dir_all(&opts.out_dir)?;
    let fingerprint = {
        let mut h = Sha256::new();
        h.update(cfg.fingerprint());
        h.update(corpus_fingerprint(corpus));
        hex::encode(h.finalize())
    };
    let mut checkpoint = Checkpoint::open(&opts.out_dir.join(CHECKPOINT_DIR), &fingerprint, opts.force)?;
    let done = checkpoint.load(opts.force)?;

    let mut pending: Vec<&Contribution> = corpus.iter().filter(|c| !done.contains_key(&c.id)).collect();
    pending.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let limit = opts.stop_after.unwrap_or(usize::MAX);
    let interrupted = pending.len() > limit;
    pending.truncate(limit);
    tracing::info!(resumed = done.len(), pending = pending.len(), "starting run");

    let mut results = stream::iter(pending.iter().copied())
        .map(|c| {
            let ctx = &ctx;
            async move { process_contribution(ctx, c).await }
        })
        .buffer_unordered(cfg.parallelism);
    let mut buffer = Vec::new();
    let mut processed_now = 0;
    while let Some(result) = results.next().await {
        match result {
            Ok(o) => {
                buffer.push(o);
                processed_now += 1;
                if buffer.len() >= cfg.checkpoint_interval {
                    checkpoint.append(&buffer)?;
                    buffer.clear();
                }
            }
            Err(e) => {
                drop(results);
                checkpoint.append(&buffer)?;
                return Err(e);
            }
        }
    }
    checkpoint.append(&buffer)?;

    let summary = |status, report| RunSummary { status, processed_now, resumed: done.len(), report };
    if interrupted {
        return Ok(summary(RunStatus::Interrupted, None));
    }
    let all = checkpoint.load(false)?;
    let report = write_outputs(&opts.out_dir, all.values())?;
    Ok(summary(RunStatus::Completed, Some(report)))
}

/// Writes records, quarantine entries and the report from outcomes in id order.
pub fn write_outputs<'a>(out_dir: &Path, outcomes: impl IntoIterator<Item = &'a Outcome> + Clone) -> Result<RunReport> {
    let mut records = Vec::new();
    let mut quarantine = Vec::new();
    for o in outcomes.clone() {
        if let Some(r) = &o.record {
            serde_json::to_writer(&mut records, r)?;
            records.push(b'\n');
        }
        for q in &o.quarantine {
            serde_json::to_writer(&mut quarantine, q)?;
            quarantine.push(b'\n');
        }
    }
    let report = RunReport::from_outcomes(outcomes);
    write_atomic(&out_dir.join(RECORDS_FILE), &records)?;
    write_atomic(&out_dir.join(QUARANTINE_FILE), &quarantine)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_atomic(&out_dir.join(REPORT_FILE), &json)?;
    Ok(report)
}

/// Alignment status per (contribution id, unit id), from a finished checkpoint.
pub fn alignment_statuses(out_dir: &Path) -> Result<BTreeMap<(String, String), AlignStatus>> {
    let cp = Checkpoint::open_existing(&out_dir.join(CHECKPOINT_DIR))?;
    let mut out = BTreeMap::new();
    for (id, o) in cp.load(false)? {
        for (unit, status) in o.alignment {
            out.insert((id.clone(), unit), status);
        }
    }
    Ok(out)
}

/// Records of a finished run.
pub fn read_records(out_dir: &Path) -> Result<Vec<AnnotationRecord>> {
    Ok(clarify_core::io::read_jsonl(out_dir.join(RECORDS_FILE))?)
}

pub fn read_quarantine(out_dir: &Path) -> Result<Vec<QuarantineEntry>> {
    Ok(clarify_core::io::read_jsonl(out_dir.join(QUARANTINE_FILE))?)
}
