use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::retry::Attempt;
use super::{hash_request, prompt_hash, BackendReply, ChatBackend, ChatRequest, FinishReason, LlmError, Result};

pub const ENV_ENDPOINT: &str = "UMLS_AUGMENT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "UMLS_AUGMENT_LLM_API_KEY";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| LlmError::Config(format!("set {ENV_ENDPOINT} to the chat-completions URL")))?;
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| LlmError::Config(format!("set {ENV_API_KEY}")))?;
        Ok(Self { endpoint, api_key, timeout: Duration::from_secs(120) })
    }
}

/// OpenAI-compatible chat-completions client. Sends the key both as a bearer
/// token and as an `api-key` header so Azure deployments work unchanged.
pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    calls: AtomicUsize,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent, calls: AtomicUsize::new(0) }
    }

    fn body(req: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system_message.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_message}));
        }
        messages.push(json!({"role": "user", "content": req.user_message}));
        json!({
            "model": req.model_id,
            "messages": messages,
            "max_tokens": req.params.max_tokens,
            "temperature": req.params.temperature,
            "top_p": req.params.top_p,
            "presence_penalty": req.params.presence_penalty,
        })
    }
}

fn parse_completion(v: &Value) -> Result<BackendReply> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    let raw_text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    };
    Ok(BackendReply { raw_text, finish_reason })
}

impl ChatBackend for LiveBackend {
    fn send(&self, req: &ChatRequest) -> Attempt<BackendReply, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let sent = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .header("api-key", &self.config.api_key)
            .send_json(Self::body(req));
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str::<Value>(&text) {
                Ok(v) => match parse_completion(&v) {
                    Ok(reply) => Attempt::Done(reply),
                    Err(e) => Attempt::Fatal(e),
                },
                Err(e) => Attempt::Fatal(LlmError::Protocol(format!("invalid JSON body: {e}"))),
            },
            401 | 403 => Attempt::Fatal(LlmError::Auth(format!("HTTP {status}"))),
            408 | 409 | 429 | 500..=599 => Attempt::Transient(format!("HTTP {status}")),
            _ => Attempt::Fatal(LlmError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// One mock-script line. `match` is a request cache key, a prompt hash, or a
/// substring of the user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub r#match: String,
    pub response: String,
}

/// Scripted backend. Entries are tried in order; the first whose `match`
/// equals the request key or prompt hash, or occurs in the user message, wins.
pub struct MockBackend {
    script: Vec<ScriptEntry>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        Self { script, calls: AtomicUsize::new(0) }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut script = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                script.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self::new(script))
    }

    pub fn lookup(&self, req: &ChatRequest) -> Option<&str> {
        let key = hash_request(req);
        let ph = prompt_hash(&req.user_message);
        self.script
            .iter()
            .find(|e| e.r#match == key || e.r#match == ph || req.user_message.contains(&e.r#match))
            .map(|e| e.response.as_str())
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, req: &ChatRequest) -> Attempt<BackendReply, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.lookup(req) {
            Some(text) => Attempt::Done(BackendReply { raw_text: text.to_string(), finish_reason: FinishReason::Stop }),
            None => Attempt::Fatal(LlmError::BackendScriptMiss(hash_request(req))),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
