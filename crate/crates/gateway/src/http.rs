use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::backend::ChatBackend;
use crate::error::{GatewayError, Result};
use crate::message::{Completion, Message, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, the first included.
    pub max_attempts: u32,
    /// Delay before the first retry; doubled for every further retry.
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, backoff_base_ms: 500, backoff_max_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; no key is sent when absent.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout() -> f64 {
    120.0
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            name: name.into(),
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            temperature: 0.0,
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config(format!("{}: max_in_flight must be at least 1", self.name)));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Config(format!("{}: temperature must be non-negative", self.name)));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config(format!("{}: retry.max_attempts must be at least 1", self.name)));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config(format!("{}: timeout_secs must be positive", self.name)));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    cfg: BackendConfig,
    client: reqwest::Client,
    api_key: Option<String>,
    slots: Arc<Semaphore>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("name", &self.cfg.name).field("model", &self.cfg.model).finish()
    }
}

enum AttemptError {
    Transient { status: Option<u16>, message: String },
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(format!("{}: {e}", cfg.name)))?;
        let slots = Arc::new(Semaphore::new(cfg.max_in_flight));
        Ok(HttpBackend { cfg, client, api_key, slots })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    async fn attempt(&self, messages: &[Message]) -> std::result::Result<(String, Option<WireUsage>), AttemptError> {
        let body = ChatRequest { model: &self.cfg.model, messages, temperature: self.cfg.temperature };
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Err(AttemptError::Transient { status: None, message: e.to_string() })
            }
            Err(e) => return Err(AttemptError::Fatal(self.protocol(e.to_string()))),
        };
        let status = resp.status();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Err(AttemptError::Transient { status: None, message: e.to_string() }),
            Err(e) => return Err(AttemptError::Fatal(self.protocol(e.to_string()))),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Transient { status: Some(status.as_u16()), message: truncate(&text) });
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(GatewayError::Http {
                backend: self.cfg.name.clone(),
                status: status.as_u16(),
                body: truncate(&text),
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(self.protocol(format!("invalid JSON response: {e}"))))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AttemptError::Fatal(self.protocol("response has no message content".into())))?;
        Ok((content, parsed.usage))
    }

    fn protocol(&self, message: String) -> GatewayError {
        GatewayError::Protocol { backend: self.cfg.name.clone(), message }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

#[async_trait]
impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    async fn complete(&self, messages: &[Message]) -> Result<Completion> {
        let _permit = self.slots.acquire().await.expect("semaphore never closed");
        let start = Instant::now();
        let mut last_status = None;
        let mut last = String::new();
        for attempt in 0..self.cfg.retry.max_attempts {
            if attempt > 0 {
                tokio::time::sleep(self.cfg.retry.delay(attempt)).await;
            }
            match self.attempt(messages).await {
                Ok((text, usage)) => {
                    let usage = Usage {
                        prompt_tokens: usage.as_ref().map_or(0, |u| u.prompt_tokens),
                        completion_tokens: usage.as_ref().map_or(0, |u| u.completion_tokens),
                        retries: attempt,
                        latency_ms: start.elapsed().as_millis() as u64,
                    };
                    return Ok(Completion { text, usage });
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient { status, message }) => {
                    tracing::debug!(backend = %self.cfg.name, attempt, ?status, %message, "transient failure");
                    last_status = status;
                    last = message;
                }
            }
        }
        Err(GatewayError::RetriesExhausted {
            backend: self.cfg.name.clone(),
            attempts: self.cfg.retry.max_attempts,
            last_status,
            last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_attempts: 5, backoff_base_ms: 100, backoff_max_ms: 350 };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(350));
        assert_eq!(p.delay(60), Duration::from_millis(350));
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::new("x", "http://localhost", "m");
        assert!(c.validate().is_ok());
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
        let mut c = BackendConfig::new("x", "http://localhost", "m");
        c.temperature = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_key_is_reported() {
        let mut c = BackendConfig::new("x", "http://localhost", "m");
        c.api_key_env = Some("CLARIFY_TEST_SURELY_UNSET_KEY".into());
        match HttpBackend::new(c) {
            Err(GatewayError::MissingApiKey(v)) => assert_eq!(v, "CLARIFY_TEST_SURELY_UNSET_KEY"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
