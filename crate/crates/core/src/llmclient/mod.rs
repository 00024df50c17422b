//! Chat-completion client with retries, rate limiting and an append-only
//! response cache for offline replay.

mod cache;
mod transport;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use cache::{request_hash, CacheEntry, ResponseCache};
pub use transport::{HttpTransport, Transport, TransportError, TransportResponse};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "CFFORGE_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    HttpError(u16),
    #[error("rate limited after all retries")]
    RateLimited,
    #[error("offline mode and no cached response")]
    CacheMiss,
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response body: {0}")]
    Parse(String),
    #[error("cache io: {0}")]
    Cache(#[from] std::io::Error),
}

/// Anything that turns a prompt into reply text.
pub trait Completer: Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Adapts a closure into a [`Completer`].
pub struct FnCompleter<F>(pub F);

impl<F> Completer for FnCompleter<F>
where
    F: Fn(&str) -> Result<String, LlmError> + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (self.0)(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Read from `CFFORGE_API_KEY` only; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub cache_path: Option<PathBuf>,
    pub offline: bool,
    /// Dispatch cap; `None` disables the limiter.
    pub requests_per_minute: Option<u32>,
    /// First retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".to_owned(),
            model_name: "default".to_owned(),
            api_key: None,
            temperature: 0.2,
            max_retries: 3,
            timeout_secs: 60,
            cache_path: None,
            offline: false,
            requests_per_minute: None,
            backoff_base_ms: 1000,
        }
    }
}

impl EndpointConfig {
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        if self.offline && self.cache_path.is_none() {
            return Err(LlmError::Config("offline mode needs a cache path".into()));
        }
        if self.requests_per_minute == Some(0) {
            return Err(LlmError::Config("requests_per_minute must be > 0".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_owned()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Serializes dispatch to at most one request per interval.
struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(per_minute: u32) -> Self {
        Self {
            interval: Duration::from_secs(60) / per_minute,
            next: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        let slot = next.map_or(now, |n| n.max(now));
        if slot > now {
            std::thread::sleep(slot - now);
        }
        *next = Some(slot + self.interval);
    }
}

pub struct LlmClient {
    config: EndpointConfig,
    transport: Box<dyn Transport>,
    cache: Option<ResponseCache>,
    limiter: Option<RateLimiter>,
    network_calls: AtomicUsize,
}

impl LlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let transport = HttpTransport::new(Duration::from_secs(config.timeout_secs))?;
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(config: EndpointConfig, transport: Box<dyn Transport>) -> Result<Self, LlmError> {
        config.validate()?;
        let cache = config.cache_path.as_deref().map(ResponseCache::open).transpose()?;
        Ok(Self {
            limiter: config.requests_per_minute.map(RateLimiter::new),
            config,
            transport,
            cache,
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Requests actually sent, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        })
    }

    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let cfg = &self.config;
        let hash = request_hash(&cfg.model_name, prompt, cfg.temperature);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&hash, prompt)) {
            return Ok(hit);
        }
        if cfg.offline {
            return Err(LlmError::CacheMiss);
        }
        let url = cfg.completions_url();
        let body = self.request_body(prompt);
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..=cfg.max_retries {
            if attempt > 0 {
                let delay = cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(delay));
            }
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            last = match self.transport.post(&url, cfg.api_key.as_deref(), &body) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let text = extract_content(&resp.body)?;
                    if let Some(c) = &self.cache {
                        c.put(&hash, prompt, &text, attempt as usize + 1)?;
                    }
                    return Ok(text);
                }
                Ok(resp) if resp.status == 429 => LlmError::RateLimited,
                Ok(resp) if resp.status >= 500 => LlmError::HttpError(resp.status),
                Ok(resp) => return Err(LlmError::HttpError(resp.status)),
                Err(TransportError::Timeout) => LlmError::Timeout,
                Err(TransportError::Connect(e)) => LlmError::Transport(e),
            };
            log::warn!("attempt {} to {url} failed: {last}", attempt + 1);
        }
        Err(last)
    }
}

impl Completer for LlmClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        LlmClient::complete(self, prompt)
    }
}

/// `choices[0].message.content` of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Parse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::Parse("missing choices[0].message.content".into()))
}
