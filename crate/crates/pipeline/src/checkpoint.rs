//! Processed-id shards written during a run and merged at the end.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::process::Outcome;

const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    fingerprint: String,
}

#[derive(Debug)]
pub struct Checkpoint {
    dir: PathBuf,
    next_shard: usize,
}

impl Checkpoint {
    /// Opens or creates the checkpoint directory for a run identified by
    /// `fingerprint`. With `force`, a foreign checkpoint is wiped instead of
    /// refused.
    pub fn open(dir: &Path, fingerprint: &str, force: bool) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let wanted = Manifest { format: FORMAT, fingerprint: fingerprint.to_string() };
        if manifest_path.exists() {
            let found: Option<Manifest> =
                fs::read_to_string(&manifest_path).ok().and_then(|t| serde_json::from_str(&t).ok());
            if found.as_ref() != Some(&wanted) {
                if !force {
                    return Err(match found {
                        None => PipelineError::CheckpointCorrupt {
                            path: manifest_path,
                            detail: "unreadable manifest".into(),
                        },
                        Some(_) => PipelineError::CheckpointMismatch { path: dir.to_path_buf() },
                    });
                }
                tracing::warn!(dir = %dir.display(), "discarding foreign checkpoint");
                fs::remove_dir_all(dir)?;
            }
        }
        fs::create_dir_all(dir)?;
        if !manifest_path.exists() {
            write_atomic(&manifest_path, serde_json::to_string_pretty(&wanted)?.as_bytes())?;
        }
        let mut cp = Checkpoint { dir: dir.to_path_buf(), next_shard: 0 };
        cp.next_shard = cp.shard_paths()?.iter().filter_map(|p| shard_index(p)).max().map_or(0, |m| m + 1);
        Ok(cp)
    }

    /// Opens a checkpoint directory for reading without checking its manifest.
    pub fn open_existing(dir: &Path) -> Result<Self> {
        if !dir.join("manifest.json").exists() {
            return Err(PipelineError::CheckpointCorrupt { path: dir.to_path_buf(), detail: "no manifest".into() });
        }
        Ok(Checkpoint { dir: dir.to_path_buf(), next_shard: 0 })
    }

    fn shard_paths(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for e in fs::read_dir(&self.dir)? {
            let path = e?.path();
            if shard_index(&path).is_some() {
                out.push(path);
            } else if path.extension().is_some_and(|x| x == "tmp") {
                fs::remove_file(&path)?;
            }
        }
        out.sort();
        Ok(out)
    }

    /// All outcomes recorded so far, keyed by contribution id. With `force`,
    /// unreadable shards are set aside and their contributions reprocessed.
    pub fn load(&self, force: bool) -> Result<BTreeMap<String, Outcome>> {
        let mut out = BTreeMap::new();
        for path in self.shard_paths()? {
            let text = fs::read_to_string(&path)?;
            let parsed: std::result::Result<Vec<Outcome>, String> = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
                .collect();
            match parsed {
                Ok(outcomes) => {
                    for o in outcomes {
                        out.entry(o.contribution_id.clone()).or_insert(o);
                    }
                }
                Err(detail) if force => {
                    tracing::warn!(shard = %path.display(), %detail, "setting aside corrupt shard");
                    let mut aside = path.clone().into_os_string();
                    aside.push(".corrupt");
                    fs::rename(&path, aside)?;
                }
                Err(detail) => return Err(PipelineError::CheckpointCorrupt { path, detail }),
            }
        }
        Ok(out)
    }

    /// Writes one shard atomically.
    pub fn append(&mut self, outcomes: &[Outcome]) -> Result<()> {
        if outcomes.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for o in outcomes {
            serde_json::to_writer(&mut buf, o)?;
            buf.push(b'\n');
        }
        let path = self.dir.join(format!("shard-{:06}.jsonl", self.next_shard));
        write_atomic(&path, &buf)?;
        self.next_shard += 1;
        Ok(())
    }
}

fn shard_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("shard-")?.strip_suffix(".jsonl")?.parse().ok()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
