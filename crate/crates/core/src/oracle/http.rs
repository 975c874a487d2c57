//! Chat-completions client.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::pool::Semaphore;
use super::{Oracle, OracleStats, Prompt};
use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    pub max_parallel_requests: usize,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in configuration.
    pub api_key_env: String,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            temperature: 0.0,
            max_retries: 3,
            request_timeout_secs: 60.0,
            max_parallel_requests: 4,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            return Err(Error::Config("request_timeout_secs must be > 0".into()));
        }
        if self.max_parallel_requests == 0 {
            return Err(Error::Config("max_parallel_requests must be >= 1".into()));
        }
        if self.endpoint_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(Error::Config("endpoint_url and model_name must be set".into()));
        }
        Ok(())
    }
}

pub struct HttpOracle {
    config: OracleConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
    requests: AtomicU64,
    /// Initial backoff; doubles per retry.
    backoff: Duration,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpOracle {
    /// Reads the API key from the configured environment variable, if set.
    pub fn new(config: OracleConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: OracleConfig, api_key: Option<String>) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpOracle {
            in_flight: Semaphore::new(config.max_parallel_requests),
            config,
            api_key,
            client,
            requests: AtomicU64::new(0),
            backoff: Duration::from_millis(500),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &Prompt) -> serde_json::Value {
        json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, Failure> {
        let _permit = self.in_flight.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        extract_content(&text).map_err(Failure::Fatal)
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response body.
pub fn extract_content(body: &str) -> std::result::Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON body: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| format!("no choices[0].message.content in {body}"))
}

impl Oracle for HttpOracle {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let body = self.request_body(prompt);
        let attempts = 1 + self.config.max_retries;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(msg)) => {
                    return Err(Error::Transport {
                        attempts: attempt + 1,
                        message: msg,
                    })
                }
                Err(Failure::Retryable(msg)) => {
                    log::warn!("request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }

    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn temperature(&self) -> f64 {
        self.config.temperature
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn max_retries(&self) -> u32 {
        self.config.max_retries
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel_requests
    }

    fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.requests.load(Ordering::Relaxed),
            cache_hits: 0,
        }
    }

    fn identity(&self) -> String {
        format!(
            "http {} model={} temperature={}",
            self.config.endpoint_url, self.config.model_name, self.config.temperature
        )
    }
}
