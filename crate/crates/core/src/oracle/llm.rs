//! Generic chat-completion HTTP backend.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::parse::completion_text;
use super::OracleError;

pub const DEFAULT_API_KEY_ENV: &str = "PREFBO_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// Total attempts per request, including the first.
    pub max_retries: usize,
    pub max_in_flight: usize,
    pub prompt_template_id: String,
    pub api_key_env: String,
    /// First backoff delay; doubles after every retry.
    #[serde(with = "millis")]
    pub retry_base: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
}

impl LlmConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_retries: 6,
            max_in_flight: 4,
            prompt_template_id: "survey-v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            retry_base: Duration::from_secs(1),
            timeout: Duration::from_secs(180),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.max_in_flight == 0 {
            return Err(OracleError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if self.max_retries == 0 {
            return Err(OracleError::InvalidConfig("max_retries must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(OracleError::InvalidConfig("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// A completed chat call.
#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
}

pub struct LlmClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
    api_key: String,
}

impl LlmClient {
    pub fn new(config: &LlmConfig) -> Result<Self, OracleError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| OracleError::MissingCredentials(config.api_key_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        Ok(Self {
            config: config.clone(),
            http,
            api_key,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Sends one user message, retrying 429, 5xx and transport failures with
    /// exponential backoff.
    pub fn complete(&self, prompt: &str) -> Result<Completion, OracleError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut delay = self.config.retry_base;
        let mut last_error = OracleError::Transport("no attempt made".into());
        for attempt in 0..self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let start = Instant::now();
            let sent = self
                .http
                .post(&self.config.endpoint_url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    last_error = OracleError::Transport(e.to_string());
                    continue;
                }
            };
            let status = response.status();
            let text = response.text().map_err(|e| OracleError::Transport(e.to_string()));
            if status.as_u16() == 429 {
                last_error = OracleError::RateLimited;
                continue;
            }
            if status.is_server_error() {
                last_error = OracleError::Http {
                    status: status.as_u16(),
                    body: text.unwrap_or_default(),
                };
                continue;
            }
            let text = text?;
            if !status.is_success() {
                return Err(OracleError::Http { status: status.as_u16(), body: text });
            }
            let content = completion_text(&text).ok_or_else(|| OracleError::Unparseable(text.clone()))?;
            return Ok(Completion {
                text: content,
                latency_ms: start.elapsed().as_millis() as u64,
            });
        }
        Err(last_error)
    }
}
