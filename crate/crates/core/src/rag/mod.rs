//! Retrieval over the UMLS concept file.
//!
//! Rows are packed greedily into chunks under a token budget, each chunk is
//! embedded, and prompts are augmented with the text of the top-k chunks by
//! cosine similarity. The index is an exact exhaustive scan.

mod embed;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{
    build_index, EmbeddingProvider, HashingEmbedder, LiveEmbedder, LiveEmbedderConfig, ENV_EMBED_API_KEY,
    ENV_EMBED_ENDPOINT, ENV_EMBED_MODEL,
};

use crate::llm::LlmError;
use crate::prompt::{prompt_id, PromptMode, RenderedPrompt};

/// Token budget per chunk.
pub const DEFAULT_MAX_TOKENS: usize = 8192;
/// Chunks retrieved per prompt.
pub const DEFAULT_TOP_K: usize = 30;
/// Header placed between the prompt and the retrieved chunk texts.
pub const RETRIEVED_HEADER: &str = "\n### Retrieved UMLS context\n";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("row {row} has {tokens} tokens, more than the chunk budget of {max}")]
    RowTooLarge { row: usize, tokens: usize, max: usize },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector has a non-finite entry")]
    NonFinite,
    #[error("index is empty")]
    EmptyIndex,
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(u64),
    #[error("hit references missing chunk {0}")]
    MissingChunk(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = RagError> = std::result::Result<T, E>;

/// Counts tokens for the chunk budget.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Each maximal alphanumeric run is one token, as is each other
/// non-whitespace character.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunTokenizer;

impl Tokenizer for RunTokenizer {
    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_run = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_run {
                    n += 1;
                    in_run = true;
                }
            } else {
                in_run = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

impl RunTokenizer {
    /// The tokens themselves, for feature hashing.
    pub fn tokens(text: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                run_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = run_start.take() {
                out.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                out.push(&text[i..i + c.len_utf8()]);
            }
        }
        if let Some(s) = run_start {
            out.push(&text[s..]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: u64,
    pub text: String,
    pub token_count: usize,
}

/// Packs rows into chunks in order, starting a new chunk whenever the next
/// row would push the running token count past `max_tokens`. Rows are never
/// split; rows should carry their own line terminators.
pub fn chunk_rows<I, S>(rows: I, max_tokens: usize, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_tokens == 0 {
        return Err(RagError::InvalidArgument("max_tokens must be positive".into()));
    }
    let mut chunks = Vec::new();
    let mut text = String::new();
    let mut tokens = 0usize;
    let flush = |text: &mut String, chunks: &mut Vec<Chunk>| {
        let t = std::mem::take(text);
        chunks.push(Chunk { chunk_id: chunks.len() as u64, token_count: tokenizer.count(&t), text: t });
    };
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.as_ref();
        let n = tokenizer.count(row);
        if n > max_tokens {
            return Err(RagError::RowTooLarge { row: i, tokens: n, max: max_tokens });
        }
        if !text.is_empty() && tokens + n > max_tokens {
            flush(&mut text, &mut chunks);
            tokens = 0;
        }
        text.push_str(row);
        tokens += n;
    }
    if !text.is_empty() {
        flush(&mut text, &mut chunks);
    }
    Ok(chunks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RagError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    a.values.iter().zip(&b.values).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(RagError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RagError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: u64,
    pub score: f64,
}

/// Exact cosine index over chunk embeddings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<u64>,
    vectors: Vec<EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    chunk_id: u64,
    vector: Vec<f32>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, chunk_id: u64, vector: EmbeddingVector) -> Result<()> {
        if self.is_empty() {
            self.dim = vector.dim();
        } else if vector.dim() != self.dim {
            return Err(RagError::DimensionMismatch(self.dim, vector.dim()));
        }
        if vector.values.iter().any(|v| !v.is_finite()) {
            return Err(RagError::NonFinite);
        }
        if vector.norm() == 0.0 {
            return Err(RagError::ZeroVector);
        }
        if self.ids.contains(&chunk_id) {
            return Err(RagError::DuplicateChunk(chunk_id));
        }
        self.ids.push(chunk_id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn from_entries<I: IntoIterator<Item = (u64, EmbeddingVector)>>(entries: I) -> Result<Self> {
        let mut idx = Self::new();
        let mut seen = HashSet::new();
        for (id, v) in entries {
            if !seen.insert(id) {
                return Err(RagError::DuplicateChunk(id));
            }
            // `insert` re-checks ids linearly; bypass that for bulk loads.
            if idx.is_empty() {
                idx.dim = v.dim();
            } else if v.dim() != idx.dim {
                return Err(RagError::DimensionMismatch(idx.dim, v.dim()));
            }
            if v.norm() == 0.0 {
                return Err(RagError::ZeroVector);
            }
            idx.ids.push(id);
            idx.vectors.push(v);
        }
        Ok(idx)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &EmbeddingVector)> {
        self.ids.iter().copied().zip(&self.vectors)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, v) in self.entries() {
            serde_json::to_writer(&mut w, &IndexRecord { chunk_id: id, vector: v.values.clone() })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: IndexRecord = serde_json::from_str(&line)?;
            entries.push((rec.chunk_id, EmbeddingVector::new(rec.vector)?));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn rank(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.chunk_id.cmp(&b.chunk_id))
}

/// Top `k` chunks by cosine similarity, best first; equal scores are ordered
/// by ascending chunk id.
pub fn query_top_k(index: &VectorIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>> {
    if index.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    if k == 0 {
        return Err(RagError::InvalidArgument("k must be at least 1".into()));
    }
    if query.dim() != index.dim {
        return Err(RagError::DimensionMismatch(query.dim(), index.dim));
    }
    let mut hits = Vec::with_capacity(index.len());
    for (id, v) in index.entries() {
        hits.push(RetrievalHit { chunk_id: id, score: cosine(query, v)? });
    }
    let k = k.min(hits.len());
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, rank);
        hits.truncate(k);
    }
    hits.sort_by(rank);
    Ok(hits)
}

/// Chunk texts by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChunkStore {
    chunks: BTreeMap<u64, Chunk>,
}

impl ChunkStore {
    pub fn new<I: IntoIterator<Item = Chunk>>(chunks: I) -> Self {
        Self { chunks: chunks.into_iter().map(|c| (c.chunk_id, c)).collect() }
    }

    pub fn get(&self, id: u64) -> Option<&Chunk> {
        self.chunks.get(&id)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for c in self.chunks.values() {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut chunks = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                chunks.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self::new(chunks))
    }
}

/// Appends the hit chunks' texts, in hit order, after the prompt and marks it `rag`.
pub fn augment_prompt(prompt: &RenderedPrompt, hits: &[RetrievalHit], chunks: &ChunkStore) -> Result<RenderedPrompt> {
    let mut text = prompt.text.clone();
    if !hits.is_empty() {
        let texts = hits
            .iter()
            .map(|h| chunks.get(h.chunk_id).map(|c| c.text.as_str()).ok_or(RagError::MissingChunk(h.chunk_id)))
            .collect::<Result<Vec<_>>>()?;
        text.push_str(RETRIEVED_HEADER);
        for t in texts {
            text.push_str(t);
        }
    }
    Ok(RenderedPrompt {
        prompt_id: prompt_id(&text, PromptMode::Rag, &prompt.params),
        text,
        mode: PromptMode::Rag,
        ..prompt.clone()
    })
}

/// A chunk store, its index and the provider used to embed queries.
pub struct Retriever<'a> {
    pub chunks: &'a ChunkStore,
    pub index: &'a VectorIndex,
    pub provider: &'a dyn EmbeddingProvider,
    pub k: usize,
}

impl Retriever<'_> {
    /// Embeds the full prompt text as the query and augments the prompt.
    pub fn augment(&self, prompt: &RenderedPrompt) -> Result<(RenderedPrompt, Vec<RetrievalHit>)> {
        let query = self
            .provider
            .embed(std::slice::from_ref(&prompt.text))?
            .pop()
            .ok_or_else(|| RagError::InvalidArgument("provider returned no vector".into()))?;
        let hits = query_top_k(self.index, &query, self.k)?;
        Ok((augment_prompt(prompt, &hits, self.chunks)?, hits))
    }
}
