use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{Chunk, EmbeddingVector, RagError, Result, RunTokenizer, VectorIndex};
use crate::hashing::FieldHasher;
use crate::llm::retry::{self, Attempt, Failure};
use crate::llm::{LlmError, ResponseCache, RetryPolicy};

pub const ENV_EMBED_ENDPOINT: &str = "UMLS_AUGMENT_EMBED_ENDPOINT";
pub const ENV_EMBED_API_KEY: &str = "UMLS_AUGMENT_EMBED_API_KEY";
pub const ENV_EMBED_MODEL: &str = "UMLS_AUGMENT_EMBED_MODEL";

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    /// Identifies the model, for run records.
    fn model_id(&self) -> String;
}

/// Deterministic feature-hashing embedder for tests and offline runs.
///
/// Every token contributes ±1 to a hashed coordinate; a hash of the exact
/// input bytes contributes one more, so texts differing only in whitespace
/// still embed differently.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn bucket(&self, bytes: &[u8]) -> (usize, f32) {
        let h = Sha256::digest(bytes);
        let n = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((n % self.dim as u64) as usize, sign)
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0f32; self.dim];
        for tok in RunTokenizer::tokens(text) {
            let (i, s) = self.bucket(tok.to_lowercase().as_bytes());
            values[i] += s;
        }
        let (i, s) = self.bucket(&[b"text:".as_slice(), text.as_bytes()].concat());
        values[i] += 0.5 * s;
        if values.iter().all(|&v| v == 0.0) {
            values[i] = 0.5;
        }
        EmbeddingVector { values }
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn model_id(&self) -> String {
        format!("hashing-{}", self.dim)
    }
}

#[derive(Debug, Clone)]
pub struct LiveEmbedderConfig {
    /// Full URL of the embeddings route.
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl LiveEmbedderConfig {
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| std::env::var(k).ok();
        let endpoint = var(ENV_EMBED_ENDPOINT)
            .ok_or_else(|| LlmError::Config(format!("set {ENV_EMBED_ENDPOINT} to the embeddings URL")))?;
        let api_key = var(ENV_EMBED_API_KEY)
            .or_else(|| var(crate::llm::ENV_API_KEY))
            .ok_or_else(|| LlmError::Config(format!("set {ENV_EMBED_API_KEY}")))?;
        Ok(Self {
            endpoint,
            api_key,
            model: var(ENV_EMBED_MODEL).unwrap_or_else(|| "text-embedding-ada-002".into()),
            batch_size: 16,
            timeout: Duration::from_secs(120),
        })
    }
}

/// OpenAI-compatible embeddings client with a per-text cache.
pub struct LiveEmbedder {
    config: LiveEmbedderConfig,
    agent: ureq::Agent,
    cache: ResponseCache<Vec<f32>>,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl LiveEmbedder {
    pub fn new(config: LiveEmbedderConfig, cache: ResponseCache<Vec<f32>>, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent, cache, retry, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn key(&self, text: &str) -> String {
        FieldHasher::new().field("embed/v1").field(&self.config.model).field(text).finish()
    }

    fn attempt(&self, batch: &[String]) -> Attempt<Vec<Vec<f32>>, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = json!({"model": self.config.model, "input": batch});
        let mut resp = match self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .header("api-key", &self.config.api_key)
            .send_json(body)
        {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(LlmError::Auth(format!("HTTP {status}"))),
            408 | 409 | 429 | 500..=599 => return Attempt::Transient(format!("HTTP {status}")),
            _ => return Attempt::Fatal(LlmError::Protocol(format!("HTTP {status}: {text}"))),
        }
        let parsed: Option<Vec<Vec<f32>>> = serde_json::from_str::<Value>(&text).ok().and_then(|v| {
            let mut data = v.get("data")?.as_array()?.clone();
            data.sort_by_key(|d| d.get("index").and_then(Value::as_u64).unwrap_or(0));
            data.iter()
                .map(|d| {
                    d.get("embedding")?
                        .as_array()?
                        .iter()
                        .map(|x| x.as_f64().map(|f| f as f32))
                        .collect::<Option<Vec<f32>>>()
                })
                .collect()
        });
        match parsed {
            Some(vs) if vs.len() == batch.len() => Attempt::Done(vs),
            _ => Attempt::Fatal(LlmError::Protocol("unexpected embeddings response".into())),
        }
    }
}

impl EmbeddingProvider for LiveEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out: Vec<Option<Vec<f32>>> = texts.iter().map(|t| self.cache.get(&self.key(t))).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        for batch in missing.chunks(self.config.batch_size.max(1)) {
            let inputs: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
            let (vectors, _) = retry::run(&self.retry, || self.attempt(&inputs)).map_err(|f| match f {
                Failure::Fatal(e) => e,
                Failure::Exhausted { attempts, last } => LlmError::ExhaustedRetries { attempts, last },
            })?;
            for (&i, v) in batch.iter().zip(vectors) {
                self.cache.insert(&self.key(&texts[i]), v.clone())?;
                out[i] = Some(v);
            }
        }
        out.into_iter()
            .map(|v| EmbeddingVector::new(v.expect("every slot filled")))
            .collect()
    }

    fn model_id(&self) -> String {
        self.config.model.clone()
    }
}

/// Embeds every chunk and builds the index, running up to `parallelism`
/// embedding batches at once.
pub fn build_index(
    chunks: &[Chunk],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
    parallelism: usize,
) -> Result<VectorIndex> {
    let batches: Vec<&[Chunk]> = chunks.chunks(batch_size.max(1)).collect();
    let results: Mutex<Vec<Option<Result<Vec<EmbeddingVector>>>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..parallelism.max(1).min(batches.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(i) else { break };
                let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
                let r = provider.embed(&texts);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let mut entries = Vec::with_capacity(chunks.len());
    for (batch, r) in batches.iter().zip(results.into_inner().expect("results lock")) {
        let vectors = r.expect("every batch ran")?;
        if vectors.len() != batch.len() {
            return Err(RagError::InvalidArgument("provider returned the wrong number of vectors".into()));
        }
        entries.extend(batch.iter().map(|c| c.chunk_id).zip(vectors));
    }
    VectorIndex::from_entries(entries)
}
