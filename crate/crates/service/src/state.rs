//! Service state, rebuilt by folding journal entries.

use std::collections::{BTreeMap, BTreeSet};

use clarify_core::model::{AnnotationRecord, ClarificationEvent, Phase};
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::error::{Result, ServiceError};
use crate::journal::{Event, JournalEntry};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorState {
    /// Tutorial items validated so far, by index.
    pub tutorial_passed: BTreeSet<usize>,
    pub tutorial_done: bool,
    /// Distinct contributions submitted or skipped.
    pub completed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub annotator: String,
    pub phase: Phase,
    pub expires_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub record: AnnotationRecord,
    /// 1 for the first submission, incremented by each resubmission.
    pub revision: u32,
    pub submitted_at: Millis,
}

/// Latest clarification attempt for one unit, with the attempts it replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub attempt: u32,
    pub backend: String,
    pub output: String,
    pub unit_text: String,
    pub rejected: Vec<ClarificationEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportStream {
    #[default]
    Records,
    Events,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub stream: ExportStream,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
}

type DraftMap = BTreeMap<String, BTreeMap<String, BTreeMap<String, Draft>>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    pub last_at: Millis,
    pub fingerprint: Option<String>,
    pub tutorial_items: usize,
    pub annotators: BTreeMap<String, AnnotatorState>,
    /// Current lease per contribution id.
    pub leases: BTreeMap<String, Lease>,
    /// Latest record per contribution id, then annotator id.
    pub records: BTreeMap<String, BTreeMap<String, StoredRecord>>,
    /// Drafts per annotator, contribution id and unit id.
    pub drafts: DraftMap,
    pub exports: u64,
}

impl State {
    /// Folds one entry into the state. Entries must arrive in sequence.
    pub fn apply(&mut self, entry: &JournalEntry) -> Result<()> {
        if entry.seq != self.last_seq + 1 {
            return Err(ServiceError::JournalCorrupt {
                path: String::new(),
                detail: format!("entry {} applied after {}", entry.seq, self.last_seq),
            });
        }
        self.leases.retain(|_, l| l.expires_at > entry.at);
        match &entry.event {
            Event::CampaignStarted { fingerprint, tutorial_items } => {
                self.fingerprint = Some(fingerprint.clone());
                self.tutorial_items = *tutorial_items;
            }
            Event::TutorialAttempt { annotator, item, passed, .. } => {
                let a = self.annotators.entry(annotator.clone()).or_default();
                if *passed {
                    a.tutorial_passed.insert(*item);
                }
                a.tutorial_done = a.tutorial_passed.len() >= self.tutorial_items;
            }
            Event::Assigned { annotator, contribution_id, phase, expires_at } => {
                self.leases.insert(
                    contribution_id.clone(),
                    Lease { annotator: annotator.clone(), phase: *phase, expires_at: *expires_at },
                );
            }
            Event::Regenerated { annotator, contribution_id, au_id, unit_text, attempt, backend, output, superseded } => {
                let drafts = self.drafts.entry(annotator.clone()).or_default().entry(contribution_id.clone()).or_default();
                let mut rejected = drafts.remove(au_id).map(|d| d.rejected).unwrap_or_default();
                rejected.extend(superseded.iter().cloned());
                drafts.insert(
                    au_id.clone(),
                    Draft {
                        attempt: *attempt,
                        backend: backend.clone(),
                        output: output.clone(),
                        unit_text: unit_text.clone(),
                        rejected,
                    },
                );
            }
            Event::Submitted { record } | Event::Skipped { record } => {
                let cid = &record.contribution_id;
                let who = &record.annotator_id;
                let per = self.records.entry(cid.clone()).or_default();
                let revision = per.get(who).map_or(1, |r| r.revision + 1);
                if revision == 1 {
                    self.annotators.entry(who.clone()).or_default().completed += 1;
                }
                per.insert(who.clone(), StoredRecord { record: record.clone(), revision, submitted_at: entry.at });
                if self.leases.get(cid).is_some_and(|l| &l.annotator == who) {
                    self.leases.remove(cid);
                }
            }
            Event::Exported { .. } => self.exports += 1,
        }
        self.last_seq = entry.seq;
        self.last_at = entry.at;
        Ok(())
    }

    /// The lease on `contribution_id`, unless it has run out at `now`.
    pub fn live_lease(&self, contribution_id: &str, now: Millis) -> Option<&Lease> {
        self.leases.get(contribution_id).filter(|l| l.expires_at > now)
    }

    /// The contribution `annotator` currently holds, if any.
    pub fn held_by(&self, annotator: &str, now: Millis) -> Option<(&str, &Lease)> {
        self.leases
            .iter()
            .find(|(_, l)| l.annotator == annotator && l.expires_at > now)
            .map(|(c, l)| (c.as_str(), l))
    }

    pub fn record(&self, contribution_id: &str, annotator: &str) -> Option<&StoredRecord> {
        self.records.get(contribution_id).and_then(|m| m.get(annotator))
    }

    pub fn drafts_of(&self, annotator: &str, contribution_id: &str) -> Option<&BTreeMap<String, Draft>> {
        self.drafts.get(annotator).and_then(|m| m.get(contribution_id))
    }

    /// Number of distinct annotators with a record on `contribution_id`.
    pub fn submitted(&self, contribution_id: &str) -> usize {
        self.records.get(contribution_id).map_or(0, BTreeMap::len)
    }

    pub fn record_count(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }
}
