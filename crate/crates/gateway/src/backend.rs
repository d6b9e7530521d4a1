use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GatewayError, Result};
use crate::message::{Completion, Message, Usage};

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, messages: &[Message]) -> Result<Completion>;
}

/// Stable key of a request: SHA-256 of the JSON-serialized message list.
pub fn request_key(messages: &[Message]) -> String {
    let json = serde_json::to_string(messages).expect("messages serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub response: String,
}

/// Offline backend replaying canned responses keyed by [`request_key`].
#[derive(Debug, Clone, Default)]
pub struct TranscriptBackend {
    name: String,
    responses: HashMap<String, String>,
}

impl TranscriptBackend {
    pub fn new(name: impl Into<String>) -> Self {
        TranscriptBackend { name: name.into(), responses: HashMap::new() }
    }

    pub fn insert(&mut self, messages: &[Message], response: impl Into<String>) {
        self.responses.insert(request_key(messages), response.into());
    }

    pub fn insert_key(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(key.into(), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let mut v: Vec<_> = self
            .responses
            .iter()
            .map(|(k, r)| TranscriptEntry { key: k.clone(), response: r.clone() })
            .collect();
        v.sort_by(|a, b| a.key.cmp(&b.key));
        v
    }

    /// Loads a JSONL file of [`TranscriptEntry`] lines.
    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut t = TranscriptBackend::new(name);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|err| GatewayError::Transcript(format!("{}:{}: {err}", path.display(), i + 1)))?;
            t.responses.insert(e.key, e.response);
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[async_trait]
impl ChatBackend for TranscriptBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, messages: &[Message]) -> Result<Completion> {
        let key = request_key(messages);
        let text = self
            .responses
            .get(&key)
            .cloned()
            .ok_or_else(|| GatewayError::Transcript(format!("no canned response for request {key}")))?;
        Ok(Completion { text, usage: Usage::default() })
    }
}

type Responder = dyn Fn(&[Message]) -> Result<String> + Send + Sync;

/// Backend computing its answer with a closure; for simulations and tests.
#[derive(Clone)]
pub struct FnBackend {
    name: String,
    f: Arc<Responder>,
}

impl FnBackend {
    pub fn new(name: impl Into<String>, f: impl Fn(&[Message]) -> Result<String> + Send + Sync + 'static) -> Self {
        FnBackend { name: name.into(), f: Arc::new(f) }
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnBackend").field("name", &self.name).finish()
    }
}

#[async_trait]
impl ChatBackend for FnBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, messages: &[Message]) -> Result<Completion> {
        let text = (self.f)(messages)?;
        Ok(Completion { text, usage: Usage::default() })
    }
}

/// Wraps a backend and keeps every successful response, so a run can later
/// be replayed offline through a [`TranscriptBackend`].
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    recorded: Mutex<TranscriptBackend>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        let recorded = Mutex::new(TranscriptBackend::new(inner.name()));
        RecordingBackend { inner, recorded }
    }

    pub fn transcript(&self) -> TranscriptBackend {
        self.recorded.lock().expect("recording lock").clone()
    }
}

impl std::fmt::Debug for RecordingBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecordingBackend").field("name", &self.inner.name()).finish()
    }
}

#[async_trait]
impl ChatBackend for RecordingBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    async fn complete(&self, messages: &[Message]) -> Result<Completion> {
        let out = self.inner.complete(messages).await?;
        self.recorded.lock().expect("recording lock").insert(messages, out.text.clone());
        Ok(out)
    }
}
