//! Chat-completion gateway.
//!
//! [`LlmGateway`] wraps a [`ChatBackend`] with a response cache keyed by
//! [`hash_request`], exponential-backoff retries for transient failures, and a
//! bound on concurrent in-flight requests. Two backends ship: [`LiveBackend`]
//! for OpenAI-compatible REST endpoints and [`MockBackend`] for scripted runs.

mod backend;
pub mod cache;
pub mod retry;

use std::collections::HashMap;
use std::io;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{LiveBackend, LiveConfig, MockBackend, ScriptEntry, ENV_API_KEY, ENV_ENDPOINT};
pub use cache::ResponseCache;
pub use retry::RetryPolicy;

use crate::hashing::{sha256_hex, FieldHasher};
use retry::{Attempt, Failure};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication rejected by backend: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("mock script has no entry for request {0}")]
    BackendScriptMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LlmError> = std::result::Result<T, E>;

/// Generation hyperparameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// Completion length limit.
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    /// Passed through verbatim; a negative value encourages repetition.
    pub presence_penalty: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { max_tokens: 200, temperature: 0.0, top_p: 0.95, presence_penalty: -1.0 }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if !self.presence_penalty.is_finite() {
            return Err(LlmError::InvalidRequest("presence_penalty must be finite".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the exact parameter values.
    pub fn fingerprint(&self) -> String {
        FieldHasher::new()
            .field(self.max_tokens.to_le_bytes())
            .field(self.temperature.to_bits().to_le_bytes())
            .field(self.top_p.to_bits().to_le_bytes())
            .field(self.presence_penalty.to_bits().to_le_bytes())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    #[serde(default)]
    pub system_message: String,
    pub user_message: String,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub raw_text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub cached: bool,
    /// Retries spent on this request (0 for cache hits).
    pub retries: u32,
}

/// What a backend returns for one successful call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub raw_text: String,
    pub finish_reason: FinishReason,
}

/// Cache key over model, messages and parameters.
pub fn hash_request(req: &ChatRequest) -> String {
    FieldHasher::new()
        .field("chat/v1")
        .field(&req.model_id)
        .field(&req.system_message)
        .field(&req.user_message)
        .field(req.params.fingerprint())
        .finish()
}

/// Digest of the user message alone; usable as a mock-script match key.
pub fn prompt_hash(user_message: &str) -> String {
    sha256_hex(user_message)
}

pub trait ChatBackend: Send + Sync {
    /// One attempt. Rate limits and server errors are [`Attempt::Transient`].
    fn send(&self, req: &ChatRequest) -> Attempt<BackendReply, LlmError>;

    /// Number of attempts made so far.
    fn calls(&self) -> usize;
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter lock");
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Caching, retrying, concurrency-bounded front end to a [`ChatBackend`].
pub struct LlmGateway {
    backend: Arc<dyn ChatBackend>,
    cache: ResponseCache<BackendReply>,
    retry: RetryPolicy,
    limiter: Limiter,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl LlmGateway {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        cache: ResponseCache<BackendReply>,
        retry: RetryPolicy,
        parallelism: usize,
    ) -> Self {
        Self { backend, cache, retry, limiter: Limiter::new(parallelism), key_locks: Mutex::new(HashMap::new()) }
    }

    pub fn backend_calls(&self) -> usize {
        self.backend.calls()
    }

    pub fn cache(&self) -> &ResponseCache<BackendReply> {
        &self.cache
    }

    pub fn is_cached(&self, req: &ChatRequest) -> bool {
        self.cache.get(&hash_request(req)).is_some()
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("key lock table");
        Arc::clone(locks.entry(key.to_string()).or_default())
    }

    /// Completes `req`, serving repeats from the cache. Concurrent identical
    /// requests wait on one another so the backend sees each key once.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        if req.user_message.trim().is_empty() {
            return Err(LlmError::InvalidRequest("user message is empty".into()));
        }
        req.params.validate()?;
        let key = hash_request(req);
        let lock = self.key_lock(&key);
        let _held = lock.lock().expect("per-key lock");

        if let Some(hit) = self.cache.get(&key) {
            return Ok(ChatResponse {
                raw_text: hit.raw_text,
                finish_reason: hit.finish_reason,
                latency_ms: 0,
                cached: true,
                retries: 0,
            });
        }

        let started = Instant::now();
        let outcome = {
            let _slot = self.limiter.acquire();
            retry::run(&self.retry, || self.backend.send(req))
        };
        let (reply, retries) = outcome.map_err(|f| match f {
            Failure::Fatal(e) => e,
            Failure::Exhausted { attempts, last } => LlmError::ExhaustedRetries { attempts, last },
        })?;
        self.cache.insert(&key, reply.clone())?;
        Ok(ChatResponse {
            raw_text: reply.raw_text,
            finish_reason: reply.finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            cached: false,
            retries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(msg: &str) -> ChatRequest {
        ChatRequest {
            model_id: "gpt-4-32k-0613".into(),
            system_message: String::new(),
            user_message: msg.into(),
            params: GenerationParams::default(),
        }
    }

    fn gateway(script: Vec<ScriptEntry>) -> (LlmGateway, Arc<MockBackend>) {
        let mock = Arc::new(MockBackend::new(script));
        let gw = LlmGateway::new(mock.clone(), ResponseCache::in_memory(), RetryPolicy::default(), 4);
        (gw, mock)
    }

    #[test]
    fn default_params() {
        let p = GenerationParams::default();
        assert_eq!(p.max_tokens, 200);
        assert_eq!(p.temperature, 0.0);
        assert_eq!(p.top_p, 0.95);
        assert_eq!(p.presence_penalty, -1.0);
        assert!(p.validate().is_ok());
        assert!(GenerationParams { top_p: 0.0, ..p }.validate().is_err());
        assert!(GenerationParams { temperature: -0.1, ..p }.validate().is_err());
    }

    #[test]
    fn cache_hit_on_repeat() {
        let text = "[('aspirin', '81 mg')]";
        let h = prompt_hash("extract strength");
        let (gw, mock) = gateway(vec![ScriptEntry { r#match: h, response: text.into() }]);
        let first = gw.complete(&req("extract strength")).unwrap();
        assert_eq!((first.raw_text.as_str(), first.cached), (text, false));
        let second = gw.complete(&req("extract strength")).unwrap();
        assert_eq!((second.raw_text.as_str(), second.cached), (text, true));
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn temperature_zero_is_deterministic() {
        let (gw, _) = gateway(vec![ScriptEntry { r#match: "strength".into(), response: "[]".into() }]);
        let a = gw.complete(&req("extract strength")).unwrap();
        let b = gw.complete(&req("extract strength")).unwrap();
        assert_eq!(a.raw_text.as_bytes(), b.raw_text.as_bytes());
    }

    #[test]
    fn script_miss_is_distinct() {
        let (gw, _) = gateway(vec![]);
        assert!(matches!(gw.complete(&req("anything")), Err(LlmError::BackendScriptMiss(_))));
        assert!(matches!(gw.complete(&req("  ")), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn request_keys() {
        let a = req("x");
        assert_eq!(hash_request(&a), hash_request(&a.clone()));
        let mut b = a.clone();
        b.params.temperature = 0.1;
        assert_ne!(hash_request(&a), hash_request(&b));
        let mut c = a.clone();
        c.model_id = "gpt-35-turbo-0301".into();
        assert_ne!(hash_request(&a), hash_request(&c));
        let mut d = a.clone();
        d.system_message = "x".into();
        assert_ne!(hash_request(&a), hash_request(&d));
    }

    #[test]
    fn concurrent_identical_requests_call_once() {
        let (gw, mock) = gateway(vec![ScriptEntry { r#match: "q".into(), response: "[]".into() }]);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| gw.complete(&req("q")).unwrap());
            }
        });
        assert_eq!(mock.calls(), 1);
    }
}
