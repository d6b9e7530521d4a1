//! Append-only event journal and state snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clarify_core::model::{AnnotationRecord, ClarificationEvent, Phase};
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::error::{Result, ServiceError};
use crate::state::{ExportFilter, State};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const SNAPSHOT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    CampaignStarted {
        fingerprint: String,
        tutorial_items: usize,
    },
    TutorialAttempt {
        annotator: String,
        item: usize,
        f1: f64,
        passed: bool,
    },
    Assigned {
        annotator: String,
        contribution_id: String,
        phase: Phase,
        expires_at: Millis,
    },
    Regenerated {
        annotator: String,
        contribution_id: String,
        au_id: String,
        unit_text: String,
        attempt: u32,
        backend: String,
        output: String,
        /// The attempt this one replaces, logged as rejected.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        superseded: Option<ClarificationEvent>,
    },
    Submitted {
        record: AnnotationRecord,
    },
    Skipped {
        record: AnnotationRecord,
    },
    Exported {
        filter: ExportFilter,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub at: Millis,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl Journal {
    /// Opens the journal in `dir` and returns its entries.
    ///
    /// A torn final line, left by a crash during an append, is cut off.
    /// Damage anywhere else is an error.
    pub fn open(dir: &Path, sync: bool) -> Result<(Journal, Vec<JournalEntry>)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let bytes = if path.exists() { fs::read(&path)? } else { Vec::new() };
        let corrupt = |detail: String| ServiceError::JournalCorrupt { path: path.display().to_string(), detail };

        let mut entries: Vec<JournalEntry> = Vec::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let (line, next, complete) = match bytes[offset..].iter().position(|&b| b == b'\n') {
                Some(p) => (&bytes[offset..offset + p], offset + p + 1, true),
                None => (&bytes[offset..], bytes.len(), false),
            };
            let parsed = std::str::from_utf8(line)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<JournalEntry>(s).map_err(|e| e.to_string()));
            match parsed {
                Ok(entry) if complete => {
                    let expected = entries.last().map_or(1, |e| e.seq + 1);
                    if entry.seq != expected {
                        return Err(corrupt(format!("line {line_no}: sequence {} where {expected} was expected", entry.seq)));
                    }
                    entries.push(entry);
                    good_len = next;
                }
                Ok(_) | Err(_) if next == bytes.len() => {
                    tracing::warn!(path = %path.display(), line = line_no, "discarding torn journal tail");
                    break;
                }
                Err(e) => return Err(corrupt(format!("line {line_no}: {e}"))),
                Ok(_) => unreachable!("only the final line can lack a newline"),
            }
            offset = next;
        }

        let mut file = OpenOptions::new().create(true).append(true).read(true).open(&path)?;
        if good_len < bytes.len() {
            file.set_len(good_len as u64)?;
            file.sync_data()?;
        }
        file.flush()?;
        Ok((Journal { path, file, sync }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one entry as a single line and makes it durable.
    pub fn append(&mut self, entry: &JournalEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: u32,
    pub state: State,
}

pub fn write_snapshot(dir: &Path, state: &State) -> Result<()> {
    let body = serde_json::to_vec(&Snapshot { format: SNAPSHOT_FORMAT, state: state.clone() })?;
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&body)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

/// The stored snapshot, if one exists and can be read.
pub fn read_snapshot(dir: &Path) -> Option<State> {
    let bytes = fs::read(dir.join(SNAPSHOT_FILE)).ok()?;
    match serde_json::from_slice::<Snapshot>(&bytes) {
        Ok(s) if s.format == SNAPSHOT_FORMAT => Some(s.state),
        Ok(s) => {
            tracing::warn!(format = s.format, "ignoring snapshot of unknown format");
            None
        }
        Err(e) => {
            tracing::warn!(error = %e, "ignoring unreadable snapshot");
            None
        }
    }
}
