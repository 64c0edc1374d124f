use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use umls_augment::corpus::{self, RelationType};
use umls_augment::lexicon::{self, BuildConfig, ConceptLexicon, MalformedPolicy, SemanticFilter};
use umls_augment::llm::{GenerationParams, ResponseCache, RetryPolicy};
use umls_augment::mapper::{filter_matches, ConceptMapperProvider, DictionaryMapper, MapperConfig, MedicationList};
use umls_augment::pipeline::{self, RunArtifact, RunConfig, EMBEDDING_CACHE_FILE};
use umls_augment::prompt::{render, template_for, PromptMode, TemplateLibrary};
use umls_augment::rag::{
    self, ChunkStore, EmbeddingProvider, HashingEmbedder, LiveEmbedder, LiveEmbedderConfig, Retriever, RunTokenizer,
    VectorIndex,
};

/// UMLS-augmented medication relation extraction.
#[derive(Parser)]
#[command(name = "umls-augment", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the medication lexicon cache from MRCONSO.RRF and MRSTY.RRF.
    IngestLexicon(IngestArgs),
    /// Chunk concept rows and build the retrieval index.
    BuildIndex(BuildIndexArgs),
    /// Print the chunks nearest to a query text.
    QueryIndex(QueryIndexArgs),
    /// Map lexicon terms onto every document of a corpus.
    MapConcepts(MapArgs),
    /// Render prompts without calling a model.
    Render(RenderArgs),
    /// Run extraction as described by a JSON config file.
    RunExtraction(RunArgs),
    /// Score a run directory against gold relations.
    Evaluate(EvaluateArgs),
    /// Put several evaluation reports side by side.
    Compare(CompareArgs),
    /// Count gold relations per type.
    Stats(StatsArgs),
}

#[derive(Args)]
struct FilterArgs {
    /// Semantic type names to keep; defaults to the three medication types.
    #[arg(long = "sty-names", num_args = 1..)]
    sty_names: Vec<String>,
    /// Stop at the first malformed row instead of skipping it.
    #[arg(long)]
    abort_on_malformed: bool,
}

impl FilterArgs {
    fn config(&self) -> Result<BuildConfig> {
        let mut cfg = BuildConfig::default();
        if !self.sty_names.is_empty() {
            cfg.filter = SemanticFilter::new(&self.sty_names)?;
        }
        if self.abort_on_malformed {
            cfg.options.on_malformed = MalformedPolicy::Abort;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    conso: PathBuf,
    #[arg(long)]
    sty: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    Hashing,
    Live,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long)]
    conso: PathBuf,
    /// Required unless --unfiltered is given.
    #[arg(long)]
    sty: Option<PathBuf>,
    /// Embed every concept row rather than only the medication rows.
    #[arg(long)]
    unfiltered: bool,
    /// Receives chunks.jsonl and index.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = rag::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    #[arg(long, value_enum, default_value = "hashing")]
    embedder: EmbedderKind,
    /// Dimension of the hashing embedder.
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct QueryIndexArgs {
    /// Directory written by build-index.
    #[arg(long)]
    index_dir: PathBuf,
    /// Query text; read from stdin when absent.
    #[arg(long)]
    text: Option<String>,
    #[arg(long, default_value_t = rag::DEFAULT_TOP_K)]
    k: usize,
    /// Must match the embedder the index was built with.
    #[arg(long, value_enum, default_value = "hashing")]
    embedder: EmbedderKind,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    mode: PromptMode,
    /// Relation types; defaults to those present in the corpus.
    #[arg(long = "rtype", num_args = 1..)]
    rtypes: Vec<RelationType>,
    /// Needed for umls mode.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Directory written by build-index; needed for rag mode.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    #[arg(long, default_value_t = rag::DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run output directory.
    #[arg(long)]
    run: PathBuf,
    /// Gold corpus; defaults to the corpus named in the run config.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output path stem; `.json` and `.txt` are written.
    #[arg(long)]
    out: PathBuf,
    /// Also report containment matching.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Report JSON files; deltas are taken against the first.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    /// Output path stem; `.json` and `.txt` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::IngestLexicon(a) => ingest(a),
        Command::BuildIndex(a) => build_index(a),
        Command::QueryIndex(a) => query_index(a),
        Command::MapConcepts(a) => map_concepts(a),
        Command::Render(a) => render_prompts(a),
        Command::RunExtraction(a) => run_extraction(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Stats(a) => stats(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (lex, report) = lexicon::build_lexicon_from_files(&a.conso, &a.sty, a.filter.config()?)?;
    lex.write_cache(create(&a.out)?)?;
    println!(
        "{} terms from {} concept rows ({} skipped), {} semantic-type rows ({} skipped)",
        lex.term_count(),
        report.conso_rows,
        report.skipped_conso,
        report.sty_rows,
        report.skipped_sty
    );
    Ok(())
}

fn embedder(kind: EmbedderKind, dim: usize, cache_dir: &Path) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match kind {
        EmbedderKind::Hashing => Box::new(HashingEmbedder::new(dim)),
        EmbedderKind::Live => Box::new(LiveEmbedder::new(
            LiveEmbedderConfig::from_env()?,
            ResponseCache::open(&cache_dir.join(EMBEDDING_CACHE_FILE))?,
            RetryPolicy::default(),
        )),
    })
}

fn build_index(a: BuildIndexArgs) -> Result<()> {
    let sty = match (&a.sty, a.unfiltered) {
        (_, true) => None,
        (Some(p), false) => Some(p.as_path()),
        (None, false) => bail!("--sty is required unless --unfiltered is given"),
    };
    let rows = lexicon::concept_rows(&a.conso, sty, &a.filter.config()?)?;
    let chunks = rag::chunk_rows(&rows, a.max_tokens, &RunTokenizer)?;
    fs::create_dir_all(&a.out_dir)?;
    let provider = embedder(a.embedder, a.dim, &a.out_dir)?;
    let index = rag::build_index(&chunks, provider.as_ref(), a.batch_size, a.parallelism)?;
    ChunkStore::new(chunks.iter().cloned()).write(create(&a.out_dir.join("chunks.jsonl"))?)?;
    index.write(create(&a.out_dir.join("index.jsonl"))?)?;
    println!("{} rows, {} chunks, {} vectors of dimension {}", rows.len(), chunks.len(), index.len(), index.dim());
    Ok(())
}

fn query_index(a: QueryIndexArgs) -> Result<()> {
    let index = VectorIndex::load(&a.index_dir.join("index.jsonl"))?;
    let chunks = ChunkStore::load(&a.index_dir.join("chunks.jsonl"))?;
    let text = match a.text {
        Some(t) => t,
        None => std::io::read_to_string(std::io::stdin())?,
    };
    let provider = embedder(a.embedder, index.dim().max(1), &a.index_dir)?;
    let query = provider.embed(&[text])?.pop().context("embedder returned no vector")?;
    for hit in rag::query_top_k(&index, &query, a.k)? {
        let first_row = chunks.get(hit.chunk_id).and_then(|c| c.text.lines().next()).unwrap_or("");
        println!("{}\t{:.6}\t{}", hit.chunk_id, hit.score, first_row);
    }
    Ok(())
}

fn load_mapper(path: &Path) -> Result<(DictionaryMapper, SemanticFilter)> {
    let lex = ConceptLexicon::load(path).with_context(|| format!("loading lexicon {}", path.display()))?;
    let filter = lex.build_config().filter.clone();
    Ok((DictionaryMapper::new(Arc::new(lex), MapperConfig::default()), filter))
}

fn map_concepts(a: MapArgs) -> Result<()> {
    let (mapper, filter) = load_mapper(&a.lexicon)?;
    let corpus = corpus::load_any(&a.corpus)?;
    let mut out = create(&a.out)?;
    for doc in &corpus.documents {
        let matches = mapper.map_concepts(doc);
        let meds = filter_matches(&matches, &filter);
        serde_json::to_writer(&mut out, &json!({
            "doc_id": doc.doc_id,
            "matches": matches,
            "medication_list": meds.terms,
        }))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!("mapped {} documents", corpus.documents.len());
    Ok(())
}

fn render_prompts(a: RenderArgs) -> Result<()> {
    let corpus = corpus::load_any(&a.corpus)?;
    let library = match &a.templates {
        Some(d) => TemplateLibrary::load_dir(d)?,
        None => TemplateLibrary::builtin(),
    };
    let mut rtypes = a.rtypes.clone();
    if rtypes.is_empty() {
        rtypes = corpus.stats().per_rtype.into_keys().collect();
    }
    let mapper = match (a.mode, &a.lexicon) {
        (PromptMode::Umls, Some(p)) => Some(load_mapper(p)?),
        (PromptMode::Umls, None) => bail!("umls mode needs --lexicon"),
        _ => None,
    };
    let retrieval = match (a.mode, &a.index_dir) {
        (PromptMode::Rag, Some(d)) => {
            let index = VectorIndex::load(&d.join("index.jsonl"))?;
            let chunks = ChunkStore::load(&d.join("chunks.jsonl"))?;
            Some((index, chunks))
        }
        (PromptMode::Rag, None) => bail!("rag mode needs --index-dir"),
        _ => None,
    };
    let hashing = retrieval.as_ref().map(|(idx, _)| HashingEmbedder::new(idx.dim().max(1)));
    let retriever = match (&retrieval, &hashing) {
        (Some((index, chunks)), Some(e)) => Some(Retriever { chunks, index, provider: e, k: a.top_k }),
        _ => None,
    };
    let params = GenerationParams::default();
    let mut out = create(&a.out)?;
    let mut n = 0;
    for &rtype in &rtypes {
        let template = template_for(rtype, a.mode, &library)?;
        for doc in &corpus.documents {
            let meds = match &mapper {
                Some((m, f)) => filter_matches(&m.map_concepts(doc), f),
                None => MedicationList::default(),
            };
            let mut prompt = render(&template, doc, &meds, a.mode, &params)?;
            if let Some(r) = &retriever {
                prompt = r.augment(&prompt)?.0;
            }
            serde_json::to_writer(&mut out, &prompt)?;
            out.write_all(b"\n")?;
            n += 1;
        }
    }
    out.flush()?;
    println!("rendered {n} prompts");
    Ok(())
}

fn run_extraction(a: RunArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let (artifact, stats) = pipeline::run_extraction(&cfg)?;
    println!(
        "{} records ({} failed) in {}",
        artifact.manifest.records,
        stats.failures,
        cfg.output_dir.display()
    );
    println!("backend calls: {}, cache hits: {}", stats.backend_calls, stats.cache_hits);
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let artifact = RunArtifact::load(&a.run).with_context(|| format!("loading run {}", a.run.display()))?;
    let corpus_path = a.corpus.clone().unwrap_or_else(|| artifact.manifest.config.corpus.clone());
    let corpus = corpus::load_any(&corpus_path)?;
    let report = pipeline::evaluate_run(&artifact, &corpus, a.lenient)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    pipeline::save_report(&report, &a.out)?;
    print!("{}", report.render_table());
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let reports = a.reports.iter().map(|p| pipeline::load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = pipeline::compare_runs(&reports);
    let table = cmp.render_table();
    if let Some(stem) = &a.out {
        let mut w = create(&stem.with_extension("json"))?;
        serde_json::to_writer_pretty(&mut w, &cmp)?;
        w.write_all(b"\n")?;
        w.flush()?;
        fs::write(stem.with_extension("txt"), &table)?;
    }
    print!("{table}");
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let s = corpus::load_any(&a.corpus)?.stats();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        print!("{}", s.render_table());
    }
    Ok(())
}
