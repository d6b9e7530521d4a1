use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, TranscriptBackend};
use crate::error::{GatewayError, Result};
use crate::http::{BackendConfig, HttpBackend};
use crate::templates::DEFAULT_LANGUAGE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Http(BackendConfig),
    /// Replays a JSONL transcript; relative paths resolve against the config file.
    Transcript { name: String, path: PathBuf },
}

impl BackendSpec {
    pub fn name(&self) -> &str {
        match self {
            BackendSpec::Http(c) => &c.name,
            BackendSpec::Transcript { name, .. } => name,
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            BackendSpec::Http(_) => BackendKind::Http,
            BackendSpec::Transcript { .. } => BackendKind::Transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_language")]
    pub language: String,
    /// Insert the stored example exchange before each request.
    #[serde(default)]
    pub one_shot: bool,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendSpec>,
}

fn default_language() -> String {
    DEFAULT_LANGUAGE.to_string()
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { language: default_language(), one_shot: false, backends: Vec::new() }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Reads a TOML file and resolves transcript paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for b in &mut cfg.backends {
            if let BackendSpec::Transcript { path: p, .. } = b {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn build_pool(&self) -> Result<BackendPool> {
        let mut pool = BackendPool::default();
        for spec in &self.backends {
            let backend: Arc<dyn ChatBackend> = match spec {
                BackendSpec::Http(c) => Arc::new(HttpBackend::new(c.clone())?),
                BackendSpec::Transcript { name, path } => Arc::new(TranscriptBackend::load(name.clone(), path)?),
            };
            pool.insert(backend)?;
        }
        Ok(pool)
    }
}

/// Named backends in name order.
#[derive(Clone, Default)]
pub struct BackendPool {
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
}

impl std::fmt::Debug for BackendPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.backends.keys()).finish()
    }
}

impl BackendPool {
    pub fn insert(&mut self, backend: Arc<dyn ChatBackend>) -> Result<()> {
        let name = backend.name().to_string();
        if self.backends.insert(name.clone(), backend).is_some() {
            return Err(GatewayError::Config(format!("duplicate backend name {name}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ChatBackend>> {
        self.backends.get(name).cloned().ok_or_else(|| GatewayError::UnknownBackend(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.backends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backends.is_empty()
    }
}
