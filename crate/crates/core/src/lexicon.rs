//! UMLS RRF ingestion and the filtered medication lexicon.
//!
//! `MRSTY.RRF` is read first to collect the CUIs whose semantic type passes the
//! [`SemanticFilter`]; `MRCONSO.RRF` is then streamed and only English,
//! non-suppressed terms of those CUIs are kept. Peak memory is the filtered
//! CUI→type map plus the output lexicon.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::text::{collapse_whitespace, fold_case};

pub const CACHE_FORMAT: &str = "umls-augment-lexicon";
pub const CACHE_VERSION: u32 = 1;

/// Semantic type names kept by default.
pub const DEFAULT_STY_NAMES: [&str; 3] =
    ["Organic Chemical", "Antibiotic", "Pharmacologic Substance"];

/// TUI aliases for the default names, used when a release spells a name differently.
pub const DEFAULT_TUI_ALIASES: [(&str, &str); 3] = [
    ("T109", "Organic Chemical"),
    ("T195", "Antibiotic"),
    ("T121", "Pharmacologic Substance"),
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no terms survived filtering; check the semantic filter and input files")]
    EmptyLexicon,
    #[error("semantic filter must name at least one semantic type")]
    EmptyFilter,
    #[error("lexicon cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LexiconError> = std::result::Result<T, E>;

/// One `MRCONSO.RRF` record, reduced to the columns the lexicon needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptRow {
    pub cui: String,
    pub language: String,
    pub source_vocab: String,
    pub term: String,
    pub suppress: char,
}

/// One `MRSTY.RRF` record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticTypeRow {
    pub cui: String,
    pub tui: String,
    pub sty_name: String,
}

fn is_cui(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 8 && b[0] == b'C' && b[1..].iter().all(u8::is_ascii_digit)
}

fn is_tui(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 4 && b[0] == b'T' && b[1..].iter().all(u8::is_ascii_digit)
}

fn split_rrf(line: &str) -> Vec<&str> {
    line.trim_end_matches(['\n', '\r']).split('|').collect()
}

/// Parses one `MRCONSO.RRF` line. `line_no` only feeds error messages.
pub fn parse_conso_line(line: &str, line_no: usize) -> Result<ConceptRow> {
    let fields = split_rrf(line);
    let malformed = |reason: String| LexiconError::MalformedRow { line: line_no, reason };
    if fields.len() < 17 {
        return Err(malformed(format!("expected at least 17 fields, found {}", fields.len())));
    }
    let cui = fields[0];
    if !is_cui(cui) {
        return Err(malformed(format!("invalid CUI {cui:?}")));
    }
    let term = fields[14];
    if term.trim().is_empty() {
        return Err(malformed("empty term".into()));
    }
    let mut suppress = fields[16].chars();
    let suppress = match (suppress.next(), suppress.next()) {
        (Some(c), None) => c,
        _ => return Err(malformed(format!("invalid SUPPRESS flag {:?}", fields[16]))),
    };
    Ok(ConceptRow {
        cui: cui.to_string(),
        language: fields[1].to_string(),
        source_vocab: fields[11].to_string(),
        term: term.to_string(),
        suppress,
    })
}

/// Parses one `MRSTY.RRF` line.
pub fn parse_sty_line(line: &str, line_no: usize) -> Result<SemanticTypeRow> {
    let fields = split_rrf(line);
    let malformed = |reason: String| LexiconError::MalformedRow { line: line_no, reason };
    if fields.len() < 4 {
        return Err(malformed(format!("expected at least 4 fields, found {}", fields.len())));
    }
    if !is_cui(fields[0]) {
        return Err(malformed(format!("invalid CUI {:?}", fields[0])));
    }
    if !is_tui(fields[1]) {
        return Err(malformed(format!("invalid TUI {:?}", fields[1])));
    }
    Ok(SemanticTypeRow {
        cui: fields[0].to_string(),
        tui: fields[1].to_string(),
        sty_name: fields[3].to_string(),
    })
}

/// Lexicon key normalization: case-fold, collapse whitespace, and strip
/// trailing periods. Idempotent.
pub fn normalize_term(term: &str) -> String {
    let mut s = collapse_whitespace(&fold_case(term));
    while s.ends_with('.') || s.ends_with(' ') {
        s.pop();
    }
    s
}

/// Semantic types to keep, compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticFilter {
    allowed_sty_names: Vec<String>,
}

impl SemanticFilter {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = BTreeSet::new();
        let mut allowed = Vec::new();
        for name in names {
            let name: String = name.into();
            let name = name.trim().to_string();
            if !name.is_empty() && seen.insert(fold_case(&name)) {
                allowed.push(name);
            }
        }
        if allowed.is_empty() {
            return Err(LexiconError::EmptyFilter);
        }
        allowed.sort_by_key(|n| fold_case(n));
        Ok(Self { allowed_sty_names: allowed })
    }

    pub fn names(&self) -> &[String] {
        &self.allowed_sty_names
    }

    pub fn allows(&self, sty_name: &str) -> bool {
        self.canonical(sty_name).is_some()
    }

    /// The filter's own spelling of `sty_name`, if allowed.
    pub fn canonical(&self, sty_name: &str) -> Option<&str> {
        let folded = fold_case(sty_name.trim());
        self.allowed_sty_names
            .iter()
            .find(|n| fold_case(n) == folded)
            .map(String::as_str)
    }
}

impl Default for SemanticFilter {
    fn default() -> Self {
        Self::new(DEFAULT_STY_NAMES).expect("default filter is non-empty")
    }
}

/// What to do with a row that fails to parse when reading RRF files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedPolicy {
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Only rows with this `LAT` value are kept.
    pub language: String,
    /// `SUPPRESS` flags that drop a row.
    pub excluded_suppress: Vec<char>,
    /// TUI → semantic type name. An alias applies when its name is in the filter.
    pub tui_aliases: BTreeMap<String, String>,
    pub on_malformed: MalformedPolicy,
    /// Fixed label of the key normalization; recorded in cache headers.
    pub normalization: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            language: "ENG".into(),
            excluded_suppress: vec!['O', 'E', 'Y'],
            tui_aliases: DEFAULT_TUI_ALIASES
                .iter()
                .map(|(t, n)| (t.to_string(), n.to_string()))
                .collect(),
            on_malformed: MalformedPolicy::Skip,
            normalization: "casefold+collapse-ws+strip-trailing-period".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BuildConfig {
    pub filter: SemanticFilter,
    pub options: BuildOptions,
}

/// A concept identity attached to a lexicon term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptRef {
    pub cui: String,
    pub sty: String,
}

/// Normalized term → concepts, restricted to the filtered semantic types.
///
/// Immutable once built; share it behind `Arc` for concurrent readers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptLexicon {
    entries: BTreeMap<String, BTreeSet<ConceptRef>>,
    build_config: BuildConfig,
}

impl ConceptLexicon {
    /// Builds a lexicon directly from `(term, cui, sty)` triples. Used for
    /// fixtures and adapters that already hold filtered data.
    pub fn from_terms<I, T, C, S>(terms: I, build_config: BuildConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (T, C, S)>,
        T: AsRef<str>,
        C: Into<String>,
        S: AsRef<str>,
    {
        let mut entries: BTreeMap<String, BTreeSet<ConceptRef>> = BTreeMap::new();
        for (term, cui, sty) in terms {
            let Some(sty) = build_config.filter.canonical(sty.as_ref()) else {
                continue;
            };
            let key = normalize_term(term.as_ref());
            if key.is_empty() {
                continue;
            }
            entries.entry(key).or_default().insert(ConceptRef {
                cui: cui.into(),
                sty: sty.to_string(),
            });
        }
        if entries.is_empty() {
            return Err(LexiconError::EmptyLexicon);
        }
        Ok(Self { entries, build_config })
    }

    pub fn term_count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, normalized: &str) -> Option<&BTreeSet<ConceptRef>> {
        self.entries.get(normalized)
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.entries.contains_key(normalized)
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<ConceptRef>> {
        &self.entries
    }

    pub fn build_config(&self) -> &BuildConfig {
        &self.build_config
    }

    fn entry_line(term: &str, concepts: &BTreeSet<ConceptRef>) -> String {
        let rec = CacheEntry {
            term: term.to_string(),
            concepts: concepts.iter().cloned().collect(),
        };
        serde_json::to_string(&rec).expect("cache entry serializes")
    }

    /// Hash over the serialized entry lines, in key order.
    pub fn content_hash(&self) -> String {
        let mut buf = String::new();
        for (term, concepts) in &self.entries {
            buf.push_str(&Self::entry_line(term, concepts));
            buf.push('\n');
        }
        sha256_hex(buf)
    }

    /// Writes the JSON-lines cache: one header record, then one record per term.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CacheHeader {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            build_config: self.build_config.clone(),
            term_count: self.term_count(),
            content_hash: self.content_hash(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (term, concepts) in &self.entries {
            w.write_all(Self::entry_line(term, concepts).as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_cache(BufWriter::new(File::create(path)?))
    }

    pub fn read_cache<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| LexiconError::Cache("missing header".into()))??;
        let header: CacheHeader = serde_json::from_str(&header_line)?;
        if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
            return Err(LexiconError::Cache(format!(
                "unsupported format {}/{}",
                header.format, header.version
            )));
        }
        let mut entries = BTreeMap::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheEntry = serde_json::from_str(&line)?;
            if normalize_term(&rec.term) != rec.term {
                return Err(LexiconError::Cache(format!("term {:?} is not normalized", rec.term)));
            }
            entries.insert(rec.term, rec.concepts.into_iter().collect());
        }
        let lex = Self { entries, build_config: header.build_config };
        if lex.term_count() != header.term_count || lex.content_hash() != header.content_hash {
            return Err(LexiconError::Cache("content hash or term count mismatch".into()));
        }
        if lex.entries.is_empty() {
            return Err(LexiconError::EmptyLexicon);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_cache(BufReader::new(File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    build_config: BuildConfig,
    term_count: usize,
    content_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    term: String,
    concepts: Vec<ConceptRef>,
}

/// Resolves which allowed semantic type names a semantic-type row contributes.
fn allowed_name<'a>(row: &SemanticTypeRow, config: &'a BuildConfig) -> Option<&'a str> {
    if let Some(name) = config.filter.canonical(&row.sty_name) {
        return Some(name);
    }
    let alias = config.options.tui_aliases.get(&row.tui)?;
    config.filter.canonical(alias)
}

/// Builds the lexicon from parsed row streams.
///
/// The semantic-type stream is consumed fully before the concept stream.
pub fn build_lexicon<C, S>(conso: C, sty: S, config: BuildConfig) -> Result<ConceptLexicon>
where
    C: IntoIterator<Item = ConceptRow>,
    S: IntoIterator<Item = SemanticTypeRow>,
{
    let mut cui_types: HashMap<String, BTreeSet<String>> = HashMap::new();
    for row in sty {
        if let Some(name) = allowed_name(&row, &config) {
            cui_types.entry(row.cui).or_default().insert(name.to_string());
        }
    }

    let mut entries: BTreeMap<String, BTreeSet<ConceptRef>> = BTreeMap::new();
    let opts = &config.options;
    for row in conso {
        if row.language != opts.language || opts.excluded_suppress.contains(&row.suppress) {
            continue;
        }
        let Some(types) = cui_types.get(&row.cui) else {
            continue;
        };
        let key = normalize_term(&row.term);
        if key.is_empty() {
            continue;
        }
        let slot = entries.entry(key).or_default();
        for sty in types {
            slot.insert(ConceptRef { cui: row.cui.clone(), sty: sty.clone() });
        }
    }
    if entries.is_empty() {
        return Err(LexiconError::EmptyLexicon);
    }
    Ok(ConceptLexicon { entries, build_config: config })
}

/// Counts of rows skipped while reading RRF files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub conso_rows: usize,
    pub sty_rows: usize,
    pub skipped_conso: usize,
    pub skipped_sty: usize,
}

fn read_rows<T>(
    path: &Path,
    policy: MalformedPolicy,
    parse: impl Fn(&str, usize) -> Result<T>,
    total: &mut usize,
    skipped: &mut usize,
) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        *total += 1;
        match parse(&line, i + 1) {
            Ok(row) => out.push(row),
            Err(e @ LexiconError::MalformedRow { .. }) => match policy {
                MalformedPolicy::Abort => return Err(e),
                MalformedPolicy::Skip => {
                    log::debug!("{}: {e}", path.display());
                    *skipped += 1;
                }
            },
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Streams `MRSTY.RRF` then `MRCONSO.RRF` from disk and builds the lexicon.
///
/// Only semantic-type rows passing the filter are retained in memory; concept
/// rows are filtered as they stream.
pub fn build_lexicon_from_files(
    conso_path: &Path,
    sty_path: &Path,
    config: BuildConfig,
) -> Result<(ConceptLexicon, IngestReport)> {
    let mut report = IngestReport::default();
    let policy = config.options.on_malformed;
    let sty_rows = read_rows(
        sty_path,
        policy,
        |line, n| {
            let row = parse_sty_line(line, n)?;
            Ok(allowed_name(&row, &config).is_some().then_some(row))
        },
        &mut report.sty_rows,
        &mut report.skipped_sty,
    )?;

    let reader = BufReader::new(File::open(conso_path)?);
    let mut skipped = 0usize;
    let mut total = 0usize;
    let mut first_err = None;
    let conso_iter = reader.lines().enumerate().filter_map(|(i, line)| {
        if first_err.is_some() {
            return None;
        }
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                first_err = Some(LexiconError::Io(e));
                return None;
            }
        };
        if line.trim().is_empty() {
            return None;
        }
        total += 1;
        match parse_conso_line(&line, i + 1) {
            Ok(row) => Some(row),
            Err(e) => {
                if policy == MalformedPolicy::Abort {
                    first_err = Some(e);
                } else {
                    skipped += 1;
                }
                None
            }
        }
    });
    let built = build_lexicon(conso_iter, sty_rows.into_iter().flatten(), config);
    if let Some(e) = first_err {
        return Err(e);
    }
    report.conso_rows = total;
    report.skipped_conso = skipped;
    Ok((built?, report))
}

/// The raw `MRCONSO.RRF` lines, terminators kept, that pass the same language,
/// suppression and semantic-type filters as [`build_lexicon_from_files`].
/// With no semantic-type file every non-empty line is returned unfiltered.
pub fn concept_rows(conso_path: &Path, sty_path: Option<&Path>, config: &BuildConfig) -> Result<Vec<String>> {
    let allowed: Option<BTreeSet<String>> = match sty_path {
        None => None,
        Some(p) => {
            let (mut total, mut skipped) = (0, 0);
            let rows = read_rows(p, config.options.on_malformed, parse_sty_line, &mut total, &mut skipped)?;
            Some(rows.into_iter().filter(|r| allowed_name(r, config).is_some()).map(|r| r.cui).collect())
        }
    };
    let mut reader = BufReader::new(File::open(conso_path)?);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(allowed) = &allowed {
            let row = match parse_conso_line(&line, line_no) {
                Ok(r) => r,
                Err(e) if config.options.on_malformed == MalformedPolicy::Abort => return Err(e),
                Err(_) => continue,
            };
            let opts = &config.options;
            if row.language != opts.language
                || opts.excluded_suppress.contains(&row.suppress)
                || !allowed.contains(&row.cui)
            {
                continue;
            }
        }
        out.push(line.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREDNISONE: &str =
        "C0032952|ENG|P|L0032952|PF|S0076456|Y|A0110906||||MSH|MH|D011241|Prednisone|0|N|";

    fn conso(cui: &str, term: &str) -> ConceptRow {
        ConceptRow {
            cui: cui.into(),
            language: "ENG".into(),
            source_vocab: "MSH".into(),
            term: term.into(),
            suppress: 'N',
        }
    }

    fn sty(cui: &str, tui: &str, name: &str) -> SemanticTypeRow {
        SemanticTypeRow { cui: cui.into(), tui: tui.into(), sty_name: name.into() }
    }

    #[test]
    fn parses_conso_record() {
        let row = parse_conso_line(PREDNISONE, 1).unwrap();
        assert_eq!(row.cui, "C0032952");
        assert_eq!(row.language, "ENG");
        assert_eq!(row.source_vocab, "MSH");
        assert_eq!(row.term, "Prednisone");
        assert_eq!(row.suppress, 'N');
    }

    #[test]
    fn conso_without_trailing_pipe() {
        let line = PREDNISONE.trim_end_matches('|');
        assert_eq!(parse_conso_line(line, 1).unwrap().term, "Prednisone");
    }

    #[test]
    fn conso_too_short() {
        assert!(matches!(
            parse_conso_line("C0000001|ENG", 7),
            Err(LexiconError::MalformedRow { line: 7, .. })
        ));
    }

    #[test]
    fn conso_bad_cui() {
        let line = "X1234567|ENG|P|L1|PF|S1|Y|A1||||MSH|MH|D1|aspirin|0|N|";
        assert!(matches!(parse_conso_line(line, 1), Err(LexiconError::MalformedRow { .. })));
    }

    #[test]
    fn parses_sty_records() {
        let row = parse_sty_line("C0032952|T109|A1.4.1.2.1|Organic Chemical|AT17702279||", 1).unwrap();
        assert_eq!(row, sty("C0032952", "T109", "Organic Chemical"));
        let row = parse_sty_line("C0003232|T195|A1.4.1.1.1.1|Antibiotic|AT1||", 1).unwrap();
        assert_eq!(row.sty_name, "Antibiotic");
        assert!(parse_sty_line("C0032952", 1).is_err());
        assert!(parse_sty_line("C0032952|X109|A|Organic Chemical|", 1).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_term("  Ranitidine   HCl. "), "ranitidine hcl");
        assert_eq!(normalize_term("a. ."), "a");
        assert_eq!(normalize_term("St. John's Wort"), "st. john's wort");
        for t in ["a. .", "X..", " Q  r ", "Vit. C."] {
            let once = normalize_term(t);
            assert_eq!(normalize_term(&once), once);
        }
    }

    #[test]
    fn filter_excludes_non_medication_types() {
        let lex = build_lexicon(
            vec![conso("C0032952", "Prednisone"), conso("C0011849", "Diabetes")],
            vec![
                sty("C0032952", "T109", "Organic Chemical"),
                sty("C0011849", "T047", "Disease or Syndrome"),
            ],
            BuildConfig::default(),
        )
        .unwrap();
        assert_eq!(lex.entries().keys().collect::<Vec<_>>(), vec!["prednisone"]);
        assert_eq!(lex.term_count(), 1);
    }

    #[test]
    fn keeps_all_four_example_medications() {
        let lex = build_lexicon(
            vec![
                conso("C0032952", "Prednisone"),
                conso("C0004057", "ASA"),
                conso("C0008809", "Cipro"),
                conso("C0070166", "Plavix"),
            ],
            vec![
                sty("C0032952", "T109", "Organic Chemical"),
                sty("C0004057", "T121", "Pharmacologic Substance"),
                sty("C0008809", "T195", "Antibiotic"),
                sty("C0070166", "T121", "Pharmacologic Substance"),
            ],
            BuildConfig::default(),
        )
        .unwrap();
        assert_eq!(lex.term_count(), 4);
        for t in ["prednisone", "asa", "cipro", "plavix"] {
            assert!(lex.contains(t), "{t}");
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        let r = build_lexicon(vec![], vec![sty("C0032952", "T109", "Organic Chemical")], BuildConfig::default());
        assert!(matches!(r, Err(LexiconError::EmptyLexicon)));
    }

    #[test]
    fn language_and_suppress_filters() {
        let mut fr = conso("C0032952", "prednisone fr");
        fr.language = "FRE".into();
        let mut sup = conso("C0032952", "obsolete name");
        sup.suppress = 'O';
        let lex = build_lexicon(
            vec![conso("C0032952", "Prednisone"), fr, sup],
            vec![sty("C0032952", "T109", "Organic Chemical")],
            BuildConfig::default(),
        )
        .unwrap();
        assert_eq!(lex.term_count(), 1);
    }

    #[test]
    fn tui_alias_and_case_insensitive_names() {
        let lex = build_lexicon(
            vec![conso("C0000002", "drug two"), conso("C0000003", "drug three")],
            vec![
                sty("C0000002", "T109", "Organic Chemicals (renamed)"),
                sty("C0000003", "T121", "PHARMACOLOGIC SUBSTANCE"),
            ],
            BuildConfig::default(),
        )
        .unwrap();
        let two = lex.get("drug two").unwrap().iter().next().unwrap();
        assert_eq!(two.sty, "Organic Chemical");
        let three = lex.get("drug three").unwrap().iter().next().unwrap();
        assert_eq!(three.sty, "Pharmacologic Substance");
    }

    #[test]
    fn duplicate_terms_merge() {
        let lex = build_lexicon(
            vec![conso("C0000002", "Aspirin"), conso("C0000002", "aspirin."), conso("C0000004", "ASPIRIN")],
            vec![
                sty("C0000002", "T109", "Organic Chemical"),
                sty("C0000002", "T121", "Pharmacologic Substance"),
                sty("C0000004", "T121", "Pharmacologic Substance"),
            ],
            BuildConfig::default(),
        )
        .unwrap();
        assert_eq!(lex.term_count(), 1);
        assert_eq!(lex.get("aspirin").unwrap().len(), 3);
    }

    #[test]
    fn concept_rows_keep_raw_lines() {
        let dir = tempfile::tempdir().unwrap();
        let conso_path = dir.path().join("MRCONSO.RRF");
        let sty_path = dir.path().join("MRSTY.RRF");
        let other = PREDNISONE.replace("C0032952", "C0000009").replace("Prednisone", "Fever");
        std::fs::write(&conso_path, format!("{PREDNISONE}\r\n{other}\n")).unwrap();
        std::fs::write(&sty_path, "C0032952|T109|A1.4.1.2.1|Organic Chemical|AT1|256|\nC0000009|T184|A|Sign or Symptom|AT2||\n")
            .unwrap();
        let cfg = BuildConfig::default();
        let rows = concept_rows(&conso_path, Some(&sty_path), &cfg).unwrap();
        assert_eq!(rows, [format!("{PREDNISONE}\r\n")]);
        assert_eq!(concept_rows(&conso_path, None, &cfg).unwrap().len(), 2);
    }

    #[test]
    fn cache_rejects_tampering() {
        let lex = ConceptLexicon::from_terms(
            [("aspirin", "C0004057", "Pharmacologic Substance")],
            BuildConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        lex.write_cache(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("C0004057", "C0004058");
        assert!(matches!(
            ConceptLexicon::read_cache(text.as_bytes()),
            Err(LexiconError::Cache(_))
        ));
    }
}
