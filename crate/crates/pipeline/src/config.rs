use std::path::Path;

use clarify_gateway::DEFAULT_LANGUAGE;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Backend name used by each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageBackends {
    pub au_extraction: String,
    pub as_detection: String,
    pub clarification: String,
}

impl StageBackends {
    pub fn all(name: &str) -> Self {
        StageBackends {
            au_extraction: name.to_string(),
            as_detection: name.to_string(),
            clarification: name.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default)]
    pub one_shot: bool,
    pub stages: StageBackends,
    #[serde(default = "default_variant")]
    pub clarification_variant: String,
    /// Contributions in flight at once.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Completed contributions per checkpoint shard.
    #[serde(default = "default_interval")]
    pub checkpoint_interval: usize,
    /// Seeds the dispatch order; results do not depend on it.
    #[serde(default)]
    pub seed: u64,
}

fn default_run_id() -> String {
    "pipeline".into()
}
fn default_language() -> String {
    DEFAULT_LANGUAGE.into()
}
fn default_variant() -> String {
    "segment".into()
}
fn default_parallelism() -> usize {
    4
}
fn default_interval() -> usize {
    50
}

impl PipelineConfig {
    pub fn new(stages: StageBackends) -> Self {
        PipelineConfig {
            run_id: default_run_id(),
            language: default_language(),
            one_shot: false,
            stages,
            clarification_variant: default_variant(),
            parallelism: default_parallelism(),
            checkpoint_interval: default_interval(),
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(PipelineError::Config("parallelism must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(PipelineError::Config("checkpoint_interval must be at least 1".into()));
        }
        if !matches!(self.clarification_variant.as_str(), "segment" | "annotation") {
            return Err(PipelineError::Config(format!(
                "clarification_variant must be segment or annotation, not {}",
                self.clarification_variant
            )));
        }
        Ok(())
    }

    /// Digest of the settings that influence outputs.
    pub fn fingerprint(&self) -> String {
        let relevant = (
            &self.run_id,
            &self.language,
            self.one_shot,
            &self.stages,
            &self.clarification_variant,
        );
        hex::encode(Sha256::digest(serde_json::to_vec(&relevant).expect("serializable")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults_and_ignores_backends() {
        let cfg = PipelineConfig::from_toml(
            r#"
            parallelism = 2
            [stages]
            au_extraction = "a"
            as_detection = "b"
            clarification = "c"
            [[backend]]
            kind = "transcript"
            name = "a"
            path = "t.jsonl"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.parallelism, 2);
        assert_eq!(cfg.language, "fr");
        assert_eq!(cfg.clarification_variant, "segment");
    }

    #[test]
    fn fingerprint_ignores_scheduling() {
        let a = PipelineConfig::new(StageBackends::all("m"));
        let mut b = a.clone();
        b.parallelism = 9;
        b.seed = 3;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.language = "en".into();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_parallelism_rejected() {
        let mut c = PipelineConfig::new(StageBackends::all("m"));
        c.parallelism = 0;
        assert!(c.validate().is_err());
    }
}
