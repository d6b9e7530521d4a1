use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clarify_gateway::DEFAULT_LANGUAGE;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    #[serde(default = "default_campaign_id")]
    pub campaign_id: String,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default)]
    pub one_shot: bool,
    /// Backend names clarifications are drawn from.
    pub backends: Vec<String>,
    #[serde(default = "default_variant")]
    pub clarification_variant: String,
    /// Fraction of contributions annotated twice.
    #[serde(default)]
    pub overlap_fraction: f64,
    /// Contributions past this fraction of the dispatch order are phase 2.
    #[serde(default = "default_phase2")]
    pub phase2_start_fraction: f64,
    /// Maximum records per annotator.
    #[serde(default)]
    pub quota: Option<u32>,
    #[serde(default = "default_lease")]
    pub lease_minutes: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda")]
    pub tutorial_lambda: f64,
    #[serde(default = "default_min_f1")]
    pub tutorial_min_f1: f64,
}

fn default_campaign_id() -> String {
    "campaign".into()
}
fn default_language() -> String {
    DEFAULT_LANGUAGE.into()
}
fn default_variant() -> String {
    "annotation".into()
}
fn default_phase2() -> f64 {
    0.75
}
fn default_lease() -> u32 {
    60
}
fn default_lambda() -> f64 {
    0.5
}
fn default_min_f1() -> f64 {
    0.8
}

impl CampaignConfig {
    pub fn new(backends: Vec<String>) -> Self {
        CampaignConfig {
            campaign_id: default_campaign_id(),
            language: default_language(),
            one_shot: false,
            backends,
            clarification_variant: default_variant(),
            overlap_fraction: 0.0,
            phase2_start_fraction: default_phase2(),
            quota: None,
            lease_minutes: default_lease(),
            seed: 0,
            tutorial_lambda: default_lambda(),
            tutorial_min_f1: default_min_f1(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ServiceError::Config(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("overlap_fraction", self.overlap_fraction)?;
        unit("phase2_start_fraction", self.phase2_start_fraction)?;
        unit("tutorial_min_f1", self.tutorial_min_f1)?;
        if !(self.tutorial_lambda > 0.0 && self.tutorial_lambda <= 1.0) {
            return Err(ServiceError::Config(format!("tutorial_lambda {} outside (0, 1]", self.tutorial_lambda)));
        }
        if self.backends.is_empty() {
            return Err(ServiceError::Config("backend pool is empty".into()));
        }
        if self.backends.iter().collect::<BTreeSet<_>>().len() != self.backends.len() {
            return Err(ServiceError::Config("backend pool lists a name twice".into()));
        }
        if self.lease_minutes == 0 {
            return Err(ServiceError::Config("lease_minutes must be positive".into()));
        }
        Ok(())
    }

    pub fn lease_ms(&self) -> i64 {
        i64::from(self.lease_minutes) * 60_000
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub id: String,
    pub name: String,
    pub token: String,
}

/// Deployment settings: campaign, accounts and file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub campaign: CampaignConfig,
    #[serde(default, rename = "annotator")]
    pub accounts: Vec<AccountSpec>,
    /// Environment variable holding the admin token.
    #[serde(default = "default_admin_env")]
    pub admin_token_env: String,
    /// Prepared corpus, JSON lines of contributions.
    pub corpus: PathBuf,
    /// Tutorial fixtures; the built-in set when absent.
    #[serde(default)]
    pub tutorial: Option<PathBuf>,
    pub data_dir: PathBuf,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Journal entries between state snapshots.
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: u64,
}

fn default_admin_env() -> String {
    "CLARIFY_ADMIN_TOKEN".into()
}
fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_snapshot_interval() -> u64 {
    100
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.data_dir);
        cfg.tutorial.as_mut().map(resolve);
        cfg.static_dir.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.campaign.validate()?;
        validate_accounts(&self.accounts)
    }
}

pub(crate) fn validate_accounts(accounts: &[AccountSpec]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut tokens = BTreeSet::new();
    for a in accounts {
        if a.token.is_empty() {
            return Err(ServiceError::Config(format!("account {} has an empty token", a.id)));
        }
        if !ids.insert(&a.id) {
            return Err(ServiceError::Config(format!("duplicate account id {}", a.id)));
        }
        if !tokens.insert(&a.token) {
            return Err(ServiceError::Config(format!("account {} reuses another account's token", a.id)));
        }
    }
    Ok(())
}
