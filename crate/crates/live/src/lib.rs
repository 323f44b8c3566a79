//! Chat-completions client for the live law-proposal operator.
//!
//! Speaks the OpenAI-compatible `/chat/completions` wire format. Transport
//! errors, 429 and 5xx responses are retried with exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use lawforge_core::operator::{BackoffRecord, ChatClient, ChatReply, OperatorError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_API_KEY_ENV: &str = "VISIONLAW_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8000/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub api_key_env: String,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub backoff_factor: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            temperature: 0.7,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_attempts: 5,
            base_delay_ms: 1000,
            backoff_factor: 2,
            max_in_flight: 4,
            timeout_secs: 120,
        }
    }
}

impl LiveConfig {
    /// Delay before retry number `retry` (1-based).
    pub fn delay_ms(&self, retry: u32) -> u64 {
        self.base_delay_ms.saturating_mul(u64::from(self.backoff_factor).saturating_pow(retry.saturating_sub(1)))
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter { max: max.max(1), used: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.max {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }

    pub fn in_use(&self) -> usize {
        *self.used.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(ChatReply),
    Retry { status: Option<u16>, reason: String },
    Fatal(OperatorError),
}

pub struct HttpChatClient {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl HttpChatClient {
    /// Reads the API key from `config.api_key_env`; fails without touching the network if unset.
    pub fn from_env(config: LiveConfig) -> Result<Self, OperatorError> {
        match std::env::var(&config.api_key_env) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::with_key(config, key)),
            _ => Err(OperatorError::Auth(format!("environment variable {} is not set", config.api_key_env))),
        }
    }

    pub fn with_key(config: LiveConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let limiter = Limiter::new(config.max_in_flight);
        HttpChatClient { config, api_key, agent, limiter }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
        })
    }

    fn attempt(&self, body: &str) -> Attempt {
        let _permit = self.limiter.acquire();
        let sent = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { status: None, reason: format!("transport: {e}") },
        };
        let status = resp.status().as_u16();
        let text = resp.into_body().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match parse_reply(&text) {
                Ok(r) => Attempt::Done(r),
                Err(e) => Attempt::Fatal(OperatorError::Unavailable(e)),
            },
            401 | 403 => Attempt::Fatal(OperatorError::Auth(format!("HTTP {status}: {}", snippet(&text)))),
            429 | 500..=599 => Attempt::Retry { status: Some(status), reason: format!("HTTP {status}") },
            _ => Attempt::Fatal(OperatorError::Unavailable(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

/// Pulls the assistant text and token usage out of a completion response.
pub fn parse_reply(text: &str) -> Result<ChatReply, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("malformed response: {e}"))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| "response has no choices[0].message.content".to_string())?;
    Ok(ChatReply {
        text: content.to_string(),
        backoffs: Vec::new(),
        prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
        completion_tokens: v["usage"]["completion_tokens"].as_u64(),
    })
}

impl ChatClient for HttpChatClient {
    fn complete(&self, system: &str, user: &str) -> Result<ChatReply, OperatorError> {
        let body = self.request_body(system, user).to_string();
        let mut backoffs = Vec::new();
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.attempt(&body) {
                Attempt::Done(mut reply) => {
                    reply.backoffs = backoffs;
                    return Ok(reply);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { status, reason } => {
                    last = reason.clone();
                    if attempt == self.config.max_attempts {
                        break;
                    }
                    let delay_ms = self.config.delay_ms(attempt);
                    backoffs.push(BackoffRecord { attempt, status, delay_ms, reason });
                    std::thread::sleep(Duration::from_millis(delay_ms));
                }
            }
        }
        Err(OperatorError::Unavailable(format!(
            "gave up after {} attempts; last error: {last}",
            self.config.max_attempts
        )))
    }
}
