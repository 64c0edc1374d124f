//! End-to-end extraction runs.
//!
//! A run maps concepts (umls mode) or retrieves context (rag mode), renders
//! one prompt per document and relation type, completes it through the
//! gateway, and parses the reply. Records are written in a fixed order to
//! `artifact.jsonl`, with the run manifest in `run.json`; neither carries
//! timestamps, so repeating a run reproduces both byte for byte. Resuming is
//! a rerun over the same response cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, Document, RelationType};
use crate::eval::{evaluate_pairs, EvalReport, MatchMode, Prf, ReportMetadata};
use crate::hashing::FieldHasher;
use crate::lexicon::{ConceptLexicon, LexiconError, SemanticFilter};
use crate::llm::{
    BackendReply, ChatBackend, ChatRequest, FinishReason, GenerationParams, LiveBackend, LiveConfig, LlmError,
    LlmGateway, MockBackend, ResponseCache, RetryPolicy,
};
use crate::mapper::{filter_matches, ConceptMapperProvider, DictionaryMapper, MapperConfig, MedicationList};
use crate::parse::{parse_pairs_with, Diagnostic, ExtractedPair, ParseOptions};
use crate::prompt::{render, template_for, PromptMode, PromptTemplate, TemplateError, TemplateLibrary};
use crate::rag::{
    ChunkStore, EmbeddingProvider, HashingEmbedder, LiveEmbedder, LiveEmbedderConfig, RagError, Retriever,
    VectorIndex, DEFAULT_TOP_K,
};

pub const ARTIFACT_FILE: &str = "artifact.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
pub const RESPONSE_CACHE_FILE: &str = "responses.jsonl";
pub const EMBEDDING_CACHE_FILE: &str = "embeddings.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("document {doc_id} is not part of the evaluation corpus")]
    SliceMismatch { doc_id: String },
    #[error("artifact is malformed: {0}")]
    Artifact(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// Scripted responses from a JSON-lines file of `{match, response}`.
    Mock { script: PathBuf },
    /// OpenAI-compatible endpoint from the environment.
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Hashing { dim: usize },
    Live,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::Hashing { dim: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub index: PathBuf,
    pub chunks: PathBuf,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub embedder: EmbedderConfig,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_parallelism() -> usize {
    4
}

/// A run, as read from its JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: PromptMode,
    pub model_id: String,
    pub corpus: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub retrieval: Option<RetrievalConfig>,
    /// Relation types to extract; empty means those present in the corpus.
    #[serde(default)]
    pub rtypes: Vec<RelationType>,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub backend: BackendConfig,
    /// Defaults to `responses.jsonl` in the output directory.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    /// Directory of `*.tmpl` files; the built-in templates otherwise.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub system_message: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Keep pairs that normalize equal instead of collapsing them.
    #[serde(default)]
    pub keep_duplicates: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str, p: &Path| {
            (!p.exists()).then(|| PipelineError::Config(format!("{what} {} does not exist", p.display())))
        };
        if self.parallelism == 0 {
            return Err(PipelineError::Config("parallelism must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(PipelineError::Config("model_id is empty".into()));
        }
        if let Some(e) = missing("corpus", &self.corpus) {
            return Err(e);
        }
        match (self.mode, &self.lexicon) {
            (PromptMode::Umls, None) => return Err(PipelineError::Config("umls mode needs a lexicon".into())),
            (_, Some(p)) => {
                if let Some(e) = missing("lexicon", p) {
                    return Err(e);
                }
            }
            _ => {}
        }
        match (self.mode, &self.retrieval) {
            (PromptMode::Rag, None) => return Err(PipelineError::Config("rag mode needs a retrieval index".into())),
            (_, Some(r)) => {
                for (what, p) in [("index", &r.index), ("chunk store", &r.chunks)] {
                    if let Some(e) = missing(what, p) {
                        return Err(e);
                    }
                }
                if r.top_k == 0 {
                    return Err(PipelineError::Config("top_k must be at least 1".into()));
                }
            }
            _ => {}
        }
        if let BackendConfig::Mock { script } = &self.backend {
            if let Some(e) = missing("mock script", script) {
                return Err(e);
            }
        }
        self.params.validate()?;
        Ok(())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.output_dir.join(RESPONSE_CACHE_FILE))
    }
}

/// One (document, relation type) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub doc_id: String,
    pub rtype: RelationType,
    pub mode: PromptMode,
    pub prompt_id: String,
    pub prompt: String,
    pub medication_terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved_chunks: Vec<u64>,
    pub raw_response: String,
    pub finish_reason: Option<FinishReason>,
    pub pairs: Vec<ExtractedPair>,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when this cell failed; the run continues past it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArtifactRecord {
    /// Re-parses the stored response; equals `pairs` for every record written
    /// by [`run_extraction`].
    pub fn reparse(&self, opts: ParseOptions) -> Vec<ExtractedPair> {
        if self.error.is_some() {
            return Vec::new();
        }
        parse_pairs_with(&self.raw_response, &self.doc_id, self.rtype, self.mode, opts).pairs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub rtypes: Vec<RelationType>,
    pub documents: usize,
    pub records: usize,
    pub failures: usize,
    /// SHA-256 of `artifact.jsonl`.
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalSummary>,
}

/// How retrieval was performed in a rag run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    /// What the query embedding covers. Always the full rendered prompt.
    pub query: String,
    pub embedder_model: String,
    pub indexed_chunks: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub manifest: RunManifest,
    pub records: Vec<ArtifactRecord>,
}

impl RunArtifact {
    /// Reads `run.json` and `artifact.jsonl` from a run directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: RunManifest = serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
        let mut records = Vec::new();
        for line in BufReader::new(File::open(dir.join(ARTIFACT_FILE))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        if records.len() != manifest.records {
            return Err(PipelineError::Artifact(format!(
                "manifest lists {} records, artifact has {}",
                manifest.records,
                records.len()
            )));
        }
        Ok(Self { manifest, records })
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions { dedup: !self.manifest.config.keep_duplicates }
    }
}

/// Counters from one run. Not part of the artifact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub failures: usize,
}

/// The loaded collaborators of a run.
pub struct Pipeline<'a> {
    pub mode: PromptMode,
    pub model_id: String,
    pub system_message: String,
    pub params: GenerationParams,
    pub parallelism: usize,
    pub parse: ParseOptions,
    pub gateway: &'a LlmGateway,
    pub templates: BTreeMap<RelationType, PromptTemplate>,
    pub mapper: Option<(&'a dyn ConceptMapperProvider, SemanticFilter)>,
    pub retriever: Option<Retriever<'a>>,
}

impl Pipeline<'_> {
    fn process(&self, doc: &Document, rtype: RelationType, hits: &AtomicUsize) -> ArtifactRecord {
        let mut record = ArtifactRecord {
            doc_id: doc.doc_id.clone(),
            rtype,
            mode: self.mode,
            prompt_id: String::new(),
            prompt: String::new(),
            medication_terms: Vec::new(),
            retrieved_chunks: Vec::new(),
            raw_response: String::new(),
            finish_reason: None,
            pairs: Vec::new(),
            diagnostics: Vec::new(),
            error: None,
        };
        if let Err(e) = self.fill(doc, rtype, &mut record, hits) {
            log::warn!("{} {}: {e}", doc.doc_id, rtype);
            record.error = Some(e.to_string());
        }
        record
    }

    fn fill(&self, doc: &Document, rtype: RelationType, rec: &mut ArtifactRecord, hits: &AtomicUsize) -> Result<()> {
        let meds = match &self.mapper {
            Some((mapper, filter)) if self.mode == PromptMode::Umls => {
                filter_matches(&mapper.map_concepts(doc), filter)
            }
            _ => MedicationList::default(),
        };
        let template = &self.templates[&rtype];
        let mut prompt = render(template, doc, &meds, template.mode, &self.params)?;
        if let Some(r) = &self.retriever {
            let (augmented, found) = r.augment(&prompt)?;
            prompt = augmented;
            rec.retrieved_chunks = found.iter().map(|h| h.chunk_id).collect();
        }
        rec.prompt_id = prompt.prompt_id.clone();
        rec.medication_terms = prompt.medication_terms.clone();
        let request = ChatRequest {
            model_id: self.model_id.clone(),
            system_message: self.system_message.clone(),
            user_message: prompt.text.clone(),
            params: self.params,
        };
        rec.prompt = prompt.text;
        let reply = self.gateway.complete(&request)?;
        if reply.cached {
            hits.fetch_add(1, Ordering::Relaxed);
        }
        let parsed = parse_pairs_with(&reply.raw_text, &doc.doc_id, rtype, self.mode, self.parse);
        rec.raw_response = reply.raw_text;
        rec.finish_reason = Some(reply.finish_reason);
        rec.pairs = parsed.pairs;
        rec.diagnostics = parsed.diagnostics;
        Ok(())
    }

    /// Runs every (document, rtype) cell, document-major, and streams the
    /// records to `out` in that order.
    pub fn run<W: Write>(&self, docs: &[Document], rtypes: &[RelationType], out: W) -> Result<RunStats> {
        let cells: Vec<(usize, RelationType)> =
            (0..docs.len()).flat_map(|d| rtypes.iter().map(move |&r| (d, r))).collect();
        let calls_before = self.gateway.backend_calls();
        let next = AtomicUsize::new(0);
        let hits = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, ArtifactRecord)>();
        let written = std::thread::scope(|s| {
            for _ in 0..self.parallelism.max(1).min(cells.len().max(1)) {
                let tx = tx.clone();
                let (cells, next, hits) = (&cells, &next, &hits);
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&(d, r)) = cells.get(i) else { break };
                    if tx.send((i, self.process(&docs[d], r, hits))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            write_in_order(rx, out)
        })?;
        Ok(RunStats {
            backend_calls: self.gateway.backend_calls() - calls_before,
            cache_hits: hits.into_inner(),
            failures: written,
        })
    }
}

/// The single writer: buffers out-of-order records and emits them by index.
fn write_in_order<W: Write>(rx: mpsc::Receiver<(usize, ArtifactRecord)>, mut out: W) -> Result<usize> {
    let mut pending = BTreeMap::new();
    let mut next = 0;
    let mut failures = 0;
    for (i, rec) in rx {
        pending.insert(i, rec);
        while let Some(rec) = pending.remove(&next) {
            failures += usize::from(rec.error.is_some());
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
            next += 1;
        }
    }
    out.flush()?;
    Ok(failures)
}

fn relation_types(cfg: &RunConfig, corpus: &Corpus) -> Vec<RelationType> {
    if !cfg.rtypes.is_empty() {
        let mut seen = BTreeSet::new();
        return cfg.rtypes.iter().copied().filter(|r| seen.insert(*r)).collect();
    }
    corpus.relations.iter().map(|r| r.rtype).collect::<BTreeSet<_>>().into_iter().collect()
}

fn open_backend(cfg: &RunConfig) -> Result<Arc<dyn ChatBackend>> {
    Ok(match &cfg.backend {
        BackendConfig::Mock { script } => Arc::new(MockBackend::from_file(script)?),
        BackendConfig::Live => Arc::new(LiveBackend::new(LiveConfig::from_env()?)),
    })
}

fn open_embedder(cfg: &RunConfig, e: &EmbedderConfig) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match e {
        EmbedderConfig::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)),
        EmbedderConfig::Live => Box::new(LiveEmbedder::new(
            LiveEmbedderConfig::from_env()?,
            ResponseCache::open(&cfg.output_dir.join(EMBEDDING_CACHE_FILE))?,
            cfg.retry,
        )),
    })
}

/// Loads everything a config names, runs it, and writes the artifact and
/// manifest into the output directory.
pub fn run_extraction(cfg: &RunConfig) -> Result<(RunArtifact, RunStats)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let corpus = corpus::load_any(&cfg.corpus)?;
    let rtypes = relation_types(cfg, &corpus);

    let library = match &cfg.templates {
        Some(dir) => TemplateLibrary::load_dir(dir)?,
        None => TemplateLibrary::builtin(),
    };
    let template_mode = cfg.mode;
    let templates = rtypes
        .iter()
        .map(|&r| Ok((r, template_for(r, template_mode, &library)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let mapper = match (&cfg.lexicon, cfg.mode) {
        (Some(path), PromptMode::Umls) => {
            let lexicon = ConceptLexicon::load(path)?;
            let filter = lexicon.build_config().filter.clone();
            Some((DictionaryMapper::new(Arc::new(lexicon), MapperConfig::default()), filter))
        }
        _ => None,
    };
    let retrieval = match (&cfg.retrieval, cfg.mode) {
        (Some(r), PromptMode::Rag) => Some((
            ChunkStore::load(&r.chunks)?,
            VectorIndex::load(&r.index)?,
            open_embedder(cfg, &r.embedder)?,
            r.top_k,
        )),
        _ => None,
    };

    let gateway = LlmGateway::new(open_backend(cfg)?, ResponseCache::open(&cfg.cache_path())?, cfg.retry, cfg.parallelism);
    let pipeline = Pipeline {
        mode: cfg.mode,
        model_id: cfg.model_id.clone(),
        system_message: cfg.system_message.clone(),
        params: cfg.params,
        parallelism: cfg.parallelism,
        parse: ParseOptions { dedup: !cfg.keep_duplicates },
        gateway: &gateway,
        templates,
        mapper: mapper.as_ref().map(|(m, f)| (m as &dyn ConceptMapperProvider, f.clone())),
        retriever: retrieval.as_ref().map(|(chunks, index, provider, k)| Retriever {
            chunks,
            index,
            provider: provider.as_ref(),
            k: *k,
        }),
    };

    let artifact_path = cfg.output_dir.join(ARTIFACT_FILE);
    let stats = pipeline.run(&corpus.documents, &rtypes, BufWriter::new(File::create(&artifact_path)?))?;
    let bytes = fs::read(&artifact_path)?;
    let records = bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(serde_json::from_slice)
        .collect::<Result<Vec<ArtifactRecord>, _>>()?;
    let manifest = RunManifest {
        config: cfg.clone(),
        rtypes,
        documents: corpus.documents.len(),
        records: records.len(),
        failures: stats.failures,
        content_hash: crate::hashing::sha256_hex(&bytes),
        retrieval: retrieval.as_ref().map(|(_, index, provider, k)| RetrievalSummary {
            query: "full_prompt".into(),
            embedder_model: provider.model_id(),
            indexed_chunks: index.len(),
            top_k: *k,
        }),
    };
    let mut w = BufWriter::new(File::create(cfg.output_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok((RunArtifact { manifest, records }, stats))
}

/// Scores an artifact against the gold relations of `corpus`. The slice is
/// the set of documents the artifact covers; every one must be in the corpus.
pub fn evaluate_run(artifact: &RunArtifact, corpus: &Corpus, lenient: bool) -> Result<EvalReport> {
    let known: BTreeSet<&str> = corpus.documents.iter().map(|d| d.doc_id.as_str()).collect();
    let mut slice = BTreeSet::new();
    for rec in &artifact.records {
        if !known.contains(rec.doc_id.as_str()) {
            return Err(PipelineError::SliceMismatch { doc_id: rec.doc_id.clone() });
        }
        slice.insert(rec.doc_id.clone());
    }
    let doc_ids: Vec<String> = slice.into_iter().collect();
    let pred: Vec<ExtractedPair> = artifact.records.iter().flat_map(|r| r.pairs.iter().cloned()).collect();
    let rtypes = &artifact.manifest.rtypes;
    let slice_hash = doc_ids.iter().fold(FieldHasher::new(), |h, d| h.field(d)).finish();
    let metadata = ReportMetadata {
        mode: Some(artifact.manifest.config.mode),
        model_id: artifact.manifest.config.model_id.clone(),
        documents: doc_ids.len(),
        slice_hash,
        match_mode: MatchMode::Exact,
    };
    let rows = evaluate_pairs(&pred, &corpus.relations, &doc_ids, rtypes, MatchMode::Exact);
    let mut report = EvalReport::new(metadata, rows);
    if lenient {
        report.lenient = Some(evaluate_pairs(&pred, &corpus.relations, &doc_ids, rtypes, MatchMode::Containment));
    }
    Ok(report)
}

/// Side-by-side metrics for several reports, with deltas against the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// A relation type, or `Average`.
    pub name: String,
    /// One entry per report; `None` where that report lacks the row.
    pub values: Vec<Option<Prf>>,
    /// `values[i] - values[0]` per component.
    pub deltas: Vec<Option<Prf>>,
}

fn delta(a: Prf, b: Prf) -> Prf {
    Prf::new(a.precision - b.precision, a.recall - b.recall, a.f1 - b.f1)
}

pub fn compare_runs(reports: &[EvalReport]) -> Comparison {
    let mut names: Vec<RelationType> = Vec::new();
    for r in reports {
        for m in &r.per_relation {
            if !names.contains(&m.rtype) {
                names.push(m.rtype);
            }
        }
    }
    let row = |name: String, values: Vec<Option<Prf>>| {
        let base = values.first().copied().flatten();
        let deltas = values.iter().map(|v| Some(delta((*v)?, base?))).collect();
        ComparisonRow { name, values, deltas }
    };
    let mut rows: Vec<ComparisonRow> = names
        .iter()
        .map(|&rt| {
            let values = reports
                .iter()
                .map(|r| r.per_relation.iter().find(|m| m.rtype == rt).map(|m| m.prf()))
                .collect();
            row(rt.as_str().to_string(), values)
        })
        .collect();
    rows.push(row("Average".into(), reports.iter().map(|r| Some(r.macro_average)).collect()));
    Comparison { labels: reports.iter().map(EvalReport::label).collect(), rows }
}

impl Comparison {
    /// One block of P / R / F1 columns per report, then F1 deltas against the first.
    pub fn render_table(&self) -> String {
        let cell = |v: &Option<Prf>| match v {
            Some(p) => format!("{:>6.3} {:>6.3} {:>6.3}", p.precision, p.recall, p.f1),
            None => format!("{:>6} {:>6} {:>6}", "-", "-", "-"),
        };
        let mut out = String::new();
        let _ = write!(out, "{:<16}", "");
        for l in &self.labels {
            let _ = write!(out, " | {l:<20}");
        }
        for l in self.labels.iter().skip(1) {
            let _ = write!(out, " | dF1 {l}");
        }
        out.push('\n');
        let _ = write!(out, "{:<16}", "Relation");
        for _ in &self.labels {
            let _ = write!(out, " | {:>6} {:>6} {:>6}", "P", "R", "F1");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<16}", r.name);
            for v in &r.values {
                let _ = write!(out, " | {}", cell(v));
            }
            for d in r.deltas.iter().skip(1) {
                match d {
                    Some(d) => {
                        let _ = write!(out, " | {:>+7.3}", d.f1);
                    }
                    None => {
                        let _ = write!(out, " | {:>7}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `report` as `<stem>.json` and `<stem>.txt`.
pub fn save_report(report: &EvalReport, stem: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(stem.with_extension("json"))?);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    fs::write(stem.with_extension("txt"), report.render_table())?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Builds a pipeline gateway around an in-memory cache; used where no files are wanted.
pub fn memory_gateway(backend: Arc<dyn ChatBackend>, parallelism: usize) -> LlmGateway {
    LlmGateway::new(backend, ResponseCache::<BackendReply>::in_memory(), RetryPolicy::default(), parallelism)
}
