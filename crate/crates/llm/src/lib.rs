//! Chat-completion gateway. A [`Gateway`] wraps one backend (remote HTTP,
//! deterministic mock, or cache replay) and an optional content-addressed
//! response cache.

mod cache;
mod mock;
mod remote;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{Cache, CacheEntry, CacheKey};
pub use mock::{demo_comments, word_cap, DemoPosition, MockBackend, MockBehavior};
pub use remote::{
    HttpTransport, Limiter, Permit, RemoteBackend, RetryPolicy, Sleeper, Transport, TransportError, TransportResponse,
};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_MAX_TOKENS: u32 = 64;
pub const API_KEY_ENV: &str = "SCC_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing credentials: set {API_KEY_ENV}")]
    MissingCredentials,
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("cache miss for key {key}")]
    CacheMiss { key: String },
    #[error("cache I/O on {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mock backend: {0}")]
    Mock(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form label for logs; the CLI uses the query id. Not part of the cache key.
    #[serde(default)]
    pub tag: String,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        LlmRequest {
            model: DEFAULT_MODEL.to_string(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.model.is_empty() {
            return Err(LlmError::InvalidRequest("model id is empty".into()));
        }
        Ok(())
    }

    /// OpenAI-style chat-completion body.
    pub fn wire_body(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": self.prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub usage: Usage,
    pub backend: String,
    pub cache_hit: bool,
}

/// Trim, drop one pair of surrounding quotes, and fold the text onto one line.
pub fn postprocess(raw: &str) -> String {
    let mut s = raw.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('`', '`'), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')] {
        if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
            s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
            break;
        }
    }
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

pub enum Backend {
    Remote(RemoteBackend),
    Mock(MockBackend),
    Replay,
}

impl Backend {
    pub fn label(&self) -> String {
        match self {
            Backend::Remote(_) => "remote".into(),
            Backend::Mock(m) => format!("mock:{}", m.behavior().name()),
            Backend::Replay => "replay".into(),
        }
    }
}

/// Thread-safe entry point. Remote responses are read from and written to the
/// cache; mock responses are written through so a later replay run can
/// reproduce them; replay only reads.
pub struct Gateway {
    backend: Backend,
    cache: Option<Cache>,
}

impl Gateway {
    pub fn new(backend: Backend, cache: Option<Cache>) -> Result<Self, LlmError> {
        if matches!(backend, Backend::Replay) && cache.is_none() {
            return Err(LlmError::InvalidRequest("replay backend needs a cache directory".into()));
        }
        Ok(Gateway { backend, cache })
    }

    pub fn backend_label(&self) -> String {
        self.backend.label()
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.validate()?;
        let key = CacheKey::for_request(req);
        match &self.backend {
            Backend::Replay => {
                let cache = self.cache.as_ref().expect("checked in new");
                let entry = cache.get(&key)?.ok_or_else(|| LlmError::CacheMiss { key: key.hex() })?;
                Ok(LlmResponse {
                    text: postprocess(&entry.text),
                    usage: entry.usage,
                    backend: "replay".into(),
                    cache_hit: true,
                })
            }
            Backend::Remote(remote) => {
                if let Some(cache) = &self.cache {
                    if let Some(entry) = cache.get(&key)? {
                        return Ok(LlmResponse {
                            text: postprocess(&entry.text),
                            usage: entry.usage,
                            backend: "remote".into(),
                            cache_hit: true,
                        });
                    }
                }
                let (text, usage, raw) = remote.call(req)?;
                self.persist(&key, req, &text, usage, raw, "remote")?;
                Ok(LlmResponse {
                    text: postprocess(&text),
                    usage,
                    backend: "remote".into(),
                    cache_hit: false,
                })
            }
            Backend::Mock(mock) => {
                let text = mock.respond(req)?;
                let usage = Usage {
                    prompt_tokens: req.prompt.split_whitespace().count() as u64,
                    completion_tokens: text.split_whitespace().count() as u64,
                };
                let label = self.backend.label();
                self.persist(&key, req, &text, usage, serde_json::Value::Null, &label)?;
                Ok(LlmResponse {
                    text: postprocess(&text),
                    usage,
                    backend: label,
                    cache_hit: false,
                })
            }
        }
    }

    fn persist(
        &self,
        key: &CacheKey,
        req: &LlmRequest,
        text: &str,
        usage: Usage,
        raw: serde_json::Value,
        backend: &str,
    ) -> Result<(), LlmError> {
        if let Some(cache) = &self.cache {
            cache.put(key, &CacheEntry::new(req, text, usage, raw, backend))?;
        }
        Ok(())
    }

    /// Runs requests on `workers` threads and returns results in input order.
    pub fn complete_all(&self, reqs: &[LlmRequest], workers: usize) -> Vec<Result<LlmResponse, LlmError>> {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Mutex;

        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<LlmResponse, LlmError>>>> = reqs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers.clamp(1, reqs.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.complete(&reqs[i]);
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }
}

pub(crate) fn parse_retry_after(value: &str) -> Option<Duration> {
    let secs: f64 = value.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs))
}
