use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;

use crate::{parse_retry_after, LlmError, LlmRequest, Usage, API_KEY_ENV};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// Sends one chat-completion body and returns the raw HTTP outcome.
pub trait Transport: Send + Sync {
    fn send(&self, body: &serde_json::Value) -> Result<TransportResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, body: &serde_json::Value) -> Result<TransportResponse, TransportError> {
        (**self).send(body)
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";

    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    /// Reads the key from `SCC_API_KEY`.
    pub fn from_env(base_url: &str, timeout: Duration) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(LlmError::MissingCredentials)?;
        Self::new(base_url, key, timeout)
    }
}

impl Transport for HttpTransport {
    fn send(&self, body: &serde_json::Value) -> Result<TransportResponse, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Io(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(parse_retry_after);
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Io(e.to_string())
            }
        })?;
        Ok(TransportResponse {
            status,
            retry_after,
            body,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 5,
            base: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jittered delay before retry number `retry` (0-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }

    /// Full jitter: uniform in [0, ceiling].
    pub fn delay<R: Rng>(&self, retry: u32, rng: &mut R) -> Duration {
        self.ceiling(retry).mul_f64(rng.gen::<f64>())
    }
}

/// Counting semaphore bounding in-flight remote calls.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct RemoteBackend {
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    limiter: Limiter,
    sleeper: Sleeper,
}

impl RemoteBackend {
    pub const DEFAULT_CONCURRENCY: usize = 4;

    pub fn new(transport: Box<dyn Transport>) -> Self {
        RemoteBackend {
            transport,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(Self::DEFAULT_CONCURRENCY),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, max: usize) -> Self {
        self.limiter = Limiter::new(max);
        self
    }

    /// Replaces `thread::sleep` for backoff waits; tests use this to record delays.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Returns the unprocessed completion text, usage, and raw body.
    pub fn call(&self, req: &LlmRequest) -> Result<(String, Usage, serde_json::Value), LlmError> {
        let body = req.wire_body();
        let attempts = self.retry.attempts.max(1);
        let mut rng = rand::thread_rng();
        let mut last = LlmError::Timeout { attempts };
        for attempt in 0..attempts {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.send(&body)
            };
            let mut wait = None;
            match outcome {
                Ok(r) if (200..300).contains(&r.status) => return parse_completion(&r.body),
                Ok(r) if r.status == 401 || r.status == 403 => return Err(LlmError::Auth { status: r.status }),
                Ok(r) if r.status == 429 => {
                    last = LlmError::RateLimited { attempts };
                    wait = r.retry_after;
                }
                Ok(r) if r.status >= 500 => {
                    last = LlmError::Server {
                        status: r.status,
                        attempts,
                    };
                }
                Ok(r) => {
                    return Err(LlmError::Http {
                        status: r.status,
                        message: r.body.chars().take(200).collect(),
                    })
                }
                Err(TransportError::Timeout) => last = LlmError::Timeout { attempts },
                Err(TransportError::Io(message)) => last = LlmError::Transport { attempts, message },
            }
            if attempt + 1 < attempts {
                (self.sleeper)(wait.unwrap_or_else(|| self.retry.delay(attempt, &mut rng)));
            }
        }
        Err(last)
    }
}

fn parse_completion(body: &str) -> Result<(String, Usage, serde_json::Value), LlmError> {
    let raw: serde_json::Value = serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let text = raw
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))?
        .to_string();
    let count = |p: &str| raw.pointer(p).and_then(|v| v.as_u64()).unwrap_or(0);
    let usage = Usage {
        prompt_tokens: count("/usage/prompt_tokens"),
        completion_tokens: count("/usage/completion_tokens"),
    };
    Ok((text, usage, raw))
}
