//! Documents, gold relations and the loaders that produce them.
//!
//! Two source shapes are supported: BRAT-style standoff (`.txt` + `.ann`
//! pairs, as distributed for the n2c2 medication track) and ADE JSON-lines
//! records (one drug/effect or drug/dosage pair per line). Both are converted
//! into one [`Corpus`], which has its own canonical JSON-lines form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::text::{char_boundaries, char_slice};

/// Offset used for entities whose span is unknown.
pub const NO_OFFSET: i64 = -1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{doc_id}:{line}: relation references missing entity {id}")]
    DanglingReference { doc_id: String, line: usize, id: String },
    #[error("{doc_id}:{line}: annotated surface {expected:?} does not match text {found:?}")]
    OffsetMismatch { doc_id: String, line: usize, expected: String, found: String },
    #[error("{doc_id}:{line}: {message}")]
    Annotation { doc_id: String, line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("unknown relation type {0:?}")]
    UnknownRelationType(String),
    #[error("missing annotation file {0}")]
    MissingAnnotation(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    N2c2,
    Ade,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub dataset_tag: DatasetTag,
}

/// The ten relation types: eight medication attributes and two ADE pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    #[serde(rename = "Strength-Drug")]
    StrengthDrug,
    #[serde(rename = "Duration-Drug")]
    DurationDrug,
    #[serde(rename = "Route-Drug")]
    RouteDrug,
    #[serde(rename = "Form-Drug")]
    FormDrug,
    #[serde(rename = "ADE-Drug")]
    AdeDrug,
    #[serde(rename = "Dosage-Drug")]
    DosageDrug,
    #[serde(rename = "Reason-Drug")]
    ReasonDrug,
    #[serde(rename = "Frequency-Drug")]
    FrequencyDrug,
    #[serde(rename = "Drug-ADE")]
    DrugAde,
    #[serde(rename = "Drug-Dosage")]
    DrugDosage,
}

impl RelationType {
    pub const ALL: [RelationType; 10] = [
        Self::StrengthDrug,
        Self::DurationDrug,
        Self::RouteDrug,
        Self::FormDrug,
        Self::AdeDrug,
        Self::DosageDrug,
        Self::ReasonDrug,
        Self::FrequencyDrug,
        Self::DrugAde,
        Self::DrugDosage,
    ];

    pub const N2C2: [RelationType; 8] = [
        Self::StrengthDrug,
        Self::DurationDrug,
        Self::RouteDrug,
        Self::FormDrug,
        Self::AdeDrug,
        Self::DosageDrug,
        Self::ReasonDrug,
        Self::FrequencyDrug,
    ];

    pub const ADE: [RelationType; 2] = [Self::DrugAde, Self::DrugDosage];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StrengthDrug => "Strength-Drug",
            Self::DurationDrug => "Duration-Drug",
            Self::RouteDrug => "Route-Drug",
            Self::FormDrug => "Form-Drug",
            Self::AdeDrug => "ADE-Drug",
            Self::DosageDrug => "Dosage-Drug",
            Self::ReasonDrug => "Reason-Drug",
            Self::FrequencyDrug => "Frequency-Drug",
            Self::DrugAde => "Drug-ADE",
            Self::DrugDosage => "Drug-Dosage",
        }
    }

    /// True when the drug is the first argument (the ADE corpus convention).
    pub fn drug_first(self) -> bool {
        matches!(self, Self::DrugAde | Self::DrugDosage)
    }

    /// Entity label of the non-drug argument.
    pub fn attribute_label(self) -> &'static str {
        match self {
            Self::StrengthDrug => "Strength",
            Self::DurationDrug => "Duration",
            Self::RouteDrug => "Route",
            Self::FormDrug => "Form",
            Self::AdeDrug | Self::DrugAde => "ADE",
            Self::DosageDrug | Self::DrugDosage => "Dosage",
            Self::ReasonDrug => "Reason",
            Self::FrequencyDrug => "Frequency",
        }
    }

    /// Plain-language name of the non-drug entity, as used in prompts.
    pub fn entity_word(self) -> &'static str {
        match self {
            Self::StrengthDrug => "strength",
            Self::DurationDrug => "duration",
            Self::RouteDrug => "route",
            Self::FormDrug => "form",
            Self::AdeDrug => "adverse drug event",
            Self::DrugAde => "adverse effect",
            Self::DosageDrug | Self::DrugDosage => "dosage",
            Self::ReasonDrug => "reason",
            Self::FrequencyDrug => "frequency",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::UnknownRelationType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldEntity {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub entity_id: String,
    pub label: String,
    /// Character offset, or [`NO_OFFSET`].
    pub start: i64,
    pub end: i64,
    pub surface: String,
    /// Character spans of a discontinuous annotation; empty when contiguous.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fragments: Vec<(usize, usize)>,
}

impl GoldEntity {
    pub fn span(&self) -> Option<(usize, usize)> {
        (self.start >= 0 && self.end >= self.start).then_some((self.start as usize, self.end as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldRelation {
    pub doc_id: String,
    pub rtype: RelationType,
    /// Non-drug argument for medication-attribute types; the drug for ADE types.
    pub head: GoldEntity,
    pub tail: GoldEntity,
}

impl GoldRelation {
    /// `(drug, attribute)` surfaces, regardless of argument order.
    pub fn drug_and_attribute(&self) -> (&str, &str) {
        if self.rtype.drug_first() {
            (&self.head.surface, &self.tail.surface)
        } else {
            (&self.tail.surface, &self.head.surface)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_rtype: BTreeMap<RelationType, usize>,
    pub total: usize,
    pub documents: usize,
}

impl CorpusStats {
    pub fn count(&self, rtype: RelationType) -> usize {
        self.per_rtype.get(&rtype).copied().unwrap_or(0)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<16} {:>10}\n", "Relation", "Instances");
        for (rtype, n) in &self.per_rtype {
            out.push_str(&format!("{:<16} {:>10}\n", rtype.as_str(), n));
        }
        out.push_str(&format!("{:<16} {:>10}\n", "Total", self.total));
        out.push_str(&format!("{:<16} {:>10}\n", "Documents", self.documents));
        out
    }
}

/// Counts relations per type; `documents` is the number of distinct doc ids referenced.
pub fn corpus_stats(relations: &[GoldRelation]) -> CorpusStats {
    let mut per_rtype = BTreeMap::new();
    let mut docs = BTreeSet::new();
    for r in relations {
        *per_rtype.entry(r.rtype).or_insert(0) += 1;
        docs.insert(r.doc_id.as_str());
    }
    CorpusStats { per_rtype, total: relations.len(), documents: docs.len() }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub relations: Vec<GoldRelation>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CanonicalRecord {
    Document(Document),
    Relation(GoldRelation),
}

impl Corpus {
    pub fn stats(&self) -> CorpusStats {
        let mut s = corpus_stats(&self.relations);
        s.documents = self.documents.len();
        s
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Writes the canonical JSON-lines form: documents first, then relations.
    pub fn write_canonical<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.documents {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        for r in &self.relations {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_canonical(&self, path: &Path) -> Result<()> {
        self.write_canonical(BufWriter::new(File::create(path)?))
    }

    pub fn read_canonical<R: BufRead>(r: R) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CanonicalRecord>(&line) {
                Ok(CanonicalRecord::Document(d)) => corpus.documents.push(d),
                Ok(CanonicalRecord::Relation(r)) => corpus.relations.push(r),
                Err(e) => return Err(CorpusError::Schema { line: i + 1, message: e.to_string() }),
            }
        }
        Ok(corpus)
    }
}

/// Source-format adapter.
pub trait CorpusLoader {
    fn load(&self) -> Result<Corpus>;
}

pub struct StandoffLoader {
    pub text_dir: PathBuf,
    pub ann_dir: PathBuf,
    pub dataset_tag: DatasetTag,
}

impl CorpusLoader for StandoffLoader {
    fn load(&self) -> Result<Corpus> {
        let mut corpus = load_standoff_corpus(&self.text_dir, &self.ann_dir)?;
        for d in &mut corpus.documents {
            d.dataset_tag = self.dataset_tag;
        }
        Ok(corpus)
    }
}

pub struct AdeLoader {
    pub path: PathBuf,
}

impl CorpusLoader for AdeLoader {
    fn load(&self) -> Result<Corpus> {
        load_ade_corpus(&self.path)
    }
}

pub struct CanonicalLoader {
    pub path: PathBuf,
}

impl CorpusLoader for CanonicalLoader {
    fn load(&self) -> Result<Corpus> {
        Corpus::read_canonical(BufReader::new(File::open(&self.path)?))
    }
}

/// Picks a loader from the path: a directory is standoff, a JSON-lines file
/// whose first record has a `drug` key is ADE, anything else is canonical.
pub fn load_any(path: &Path) -> Result<Corpus> {
    if path.is_dir() {
        return StandoffLoader {
            text_dir: path.to_path_buf(),
            ann_dir: path.to_path_buf(),
            dataset_tag: DatasetTag::N2c2,
        }
        .load();
    }
    let first = BufReader::new(File::open(path)?)
        .lines()
        .find(|l| l.as_ref().map(|l| !l.trim().is_empty()).unwrap_or(true))
        .transpose()?;
    let is_ade = first
        .and_then(|l| serde_json::from_str::<Value>(&l).ok())
        .map(|v| v.get("drug").is_some())
        .unwrap_or(false);
    if is_ade {
        AdeLoader { path: path.to_path_buf() }.load()
    } else {
        CanonicalLoader { path: path.to_path_buf() }.load()
    }
}

struct TextIndex<'a> {
    text: &'a str,
    bounds: Vec<usize>,
}

impl<'a> TextIndex<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, bounds: char_boundaries(text) }
    }

    fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end >= self.bounds.len() {
            return None;
        }
        Some(&self.text[self.bounds[start]..self.bounds[end]])
    }
}

fn parse_entity_line(
    doc_id: &str,
    line_no: usize,
    line: &str,
    text: &TextIndex<'_>,
) -> Result<GoldEntity> {
    let bad = |message: String| CorpusError::Annotation { doc_id: doc_id.into(), line: line_no, message };
    let mut cols = line.splitn(3, '\t');
    let id = cols.next().unwrap_or_default();
    let meta = cols.next().ok_or_else(|| bad("entity line has no type/offset column".into()))?;
    let surface = cols.next().ok_or_else(|| bad("entity line has no surface column".into()))?;
    let (label, spans) = meta
        .split_once(' ')
        .ok_or_else(|| bad(format!("cannot read type and offsets from {meta:?}")))?;
    let mut fragments = Vec::new();
    for span in spans.split(';') {
        let (s, e) = span
            .trim()
            .split_once(' ')
            .ok_or_else(|| bad(format!("bad span {span:?}")))?;
        let s: usize = s.parse().map_err(|_| bad(format!("bad offset {s:?}")))?;
        let e: usize = e.parse().map_err(|_| bad(format!("bad offset {e:?}")))?;
        if e <= s {
            return Err(bad(format!("empty span {s}..{e}")));
        }
        fragments.push((s, e));
    }
    let pieces: Option<Vec<&str>> = fragments.iter().map(|&(s, e)| text.slice(s, e)).collect();
    let found = pieces.map(|p| p.join(" ")).unwrap_or_default();
    if found != surface {
        return Err(CorpusError::OffsetMismatch {
            doc_id: doc_id.into(),
            line: line_no,
            expected: surface.into(),
            found,
        });
    }
    let (start, end) = (fragments[0].0, fragments[fragments.len() - 1].1);
    if fragments.len() == 1 {
        fragments.clear();
    }
    Ok(GoldEntity {
        entity_id: id.to_string(),
        label: label.to_string(),
        start: start as i64,
        end: end as i64,
        surface: surface.to_string(),
        fragments,
    })
}

/// Parses one `.ann` file against its text.
pub fn parse_standoff(doc_id: &str, text: &str, ann: &str) -> Result<Vec<GoldRelation>> {
    let index = TextIndex::new(text);
    let mut entities: HashMap<String, GoldEntity> = HashMap::new();
    let mut pending = Vec::new();
    for (i, line) in ann.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match line.as_bytes()[0] {
            b'T' => {
                let ent = parse_entity_line(doc_id, line_no, line, &index)?;
                entities.insert(ent.entity_id.clone(), ent);
            }
            b'R' => pending.push((line_no, line)),
            // Events, attributes, normalizations and notes carry no relations.
            _ => {}
        }
    }

    let mut relations = Vec::with_capacity(pending.len());
    for (line_no, line) in pending {
        let bad = |message: String| CorpusError::Annotation { doc_id: doc_id.into(), line: line_no, message };
        let body = line.split('\t').nth(1).ok_or_else(|| bad("relation line has no body".into()))?;
        let mut parts = body.split_whitespace();
        let rtype: RelationType = parts.next().unwrap_or_default().parse()?;
        let mut arg = |name: &str| -> Result<GoldEntity> {
            let part = parts.next().ok_or_else(|| bad(format!("missing {name}")))?;
            let id = part
                .strip_prefix(name)
                .and_then(|p| p.strip_prefix(':'))
                .ok_or_else(|| bad(format!("expected {name}:<id>, found {part:?}")))?;
            entities.get(id).cloned().ok_or_else(|| CorpusError::DanglingReference {
                doc_id: doc_id.into(),
                line: line_no,
                id: id.into(),
            })
        };
        let head = arg("Arg1")?;
        let tail = arg("Arg2")?;
        relations.push(GoldRelation { doc_id: doc_id.into(), rtype, head, tail });
    }
    Ok(relations)
}

/// Loads every `<id>.txt` in `text_dir` with its `<id>.ann` from `ann_dir`,
/// in file-name order.
pub fn load_standoff_corpus(text_dir: &Path, ann_dir: &Path) -> Result<Corpus> {
    let mut stems: Vec<String> = fs::read_dir(text_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();

    let mut corpus = Corpus::default();
    for stem in stems {
        let text = fs::read_to_string(text_dir.join(format!("{stem}.txt")))?;
        let ann_path = ann_dir.join(format!("{stem}.ann"));
        if !ann_path.exists() {
            return Err(CorpusError::MissingAnnotation(ann_path));
        }
        let ann = fs::read_to_string(&ann_path)?;
        corpus.relations.extend(parse_standoff(&stem, &text, &ann)?);
        corpus.documents.push(Document { doc_id: stem, text, dataset_tag: DatasetTag::N2c2 });
    }
    Ok(corpus)
}

/// Reads `start_char`/`end_char` from an ADE `indexes` entry. Values may be
/// scalars or single-element lists.
fn ade_span(indexes: Option<&Value>, key: &str) -> Option<(usize, usize)> {
    let entry = indexes?.get(key)?;
    let first = |v: &Value| -> Option<usize> {
        match v {
            Value::Array(a) => a.first()?.as_u64().map(|n| n as usize),
            v => v.as_u64().map(|n| n as usize),
        }
    };
    Some((first(entry.get("start_char")?)?, first(entry.get("end_char")?)?))
}

fn ade_entity(text: &str, label: &str, surface: &str, span: Option<(usize, usize)>) -> GoldEntity {
    let checked = span.filter(|&(s, e)| char_slice(text, s, e) == Some(surface));
    if span.is_some() && checked.is_none() {
        log::warn!("ADE span for {surface:?} does not match text; using surface fallback");
    }
    let (start, end) = checked.map_or((NO_OFFSET, NO_OFFSET), |(s, e)| (s as i64, e as i64));
    GoldEntity {
        entity_id: String::new(),
        label: label.into(),
        start,
        end,
        surface: surface.into(),
        fragments: Vec::new(),
    }
}

/// Parses ADE JSON-lines records from a reader.
pub fn read_ade_corpus<R: BufRead>(r: R) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema { line: line_no, message };
        let rec: Value = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let field = |k: &str| rec.get(k).and_then(Value::as_str);
        let text = field("text").ok_or_else(|| schema("missing required key \"text\"".into()))?;
        let drug = field("drug").ok_or_else(|| schema("missing required key \"drug\"".into()))?;
        let (rtype, label, key, other) = match (field("effect"), field("dosage")) {
            (Some(effect), _) => (RelationType::DrugAde, "ADE", "effect", effect),
            (None, Some(dosage)) => (RelationType::DrugDosage, "Dosage", "dosage", dosage),
            (None, None) => return Err(schema("record needs an \"effect\" or \"dosage\" key".into())),
        };
        if text.is_empty() || drug.trim().is_empty() || other.trim().is_empty() {
            return Err(schema("text, drug and the paired entity must be non-empty".into()));
        }
        let doc_id = match field("doc_id") {
            Some(id) => id.to_string(),
            None => format!("ade-{}", &sha256_hex(text)[..16]),
        };
        if !seen.contains_key(&doc_id) {
            seen.insert(doc_id.clone(), corpus.documents.len());
            corpus.documents.push(Document {
                doc_id: doc_id.clone(),
                text: text.to_string(),
                dataset_tag: DatasetTag::Ade,
            });
        }
        let indexes = rec.get("indexes");
        corpus.relations.push(GoldRelation {
            doc_id,
            rtype,
            head: ade_entity(text, "Drug", drug, ade_span(indexes, "drug")),
            tail: ade_entity(text, label, other, ade_span(indexes, key)),
        });
    }
    Ok(corpus)
}

pub fn load_ade_corpus(path: &Path) -> Result<Corpus> {
    read_ade_corpus(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "Continue: aspirin 81 mg daily.";

    #[test]
    fn standoff_strength_relation() {
        let ann = "T1\tDrug 10 17\taspirin\nT2\tStrength 18 23\t81 mg\nR1\tStrength-Drug Arg1:T2 Arg2:T1\n";
        let rels = parse_standoff("d1", TEXT, ann).unwrap();
        assert_eq!(rels.len(), 1);
        let r = &rels[0];
        assert_eq!(r.rtype, RelationType::StrengthDrug);
        assert_eq!(r.head.surface, "81 mg");
        assert_eq!(r.tail.surface, "aspirin");
        assert_eq!(r.drug_and_attribute(), ("aspirin", "81 mg"));
        assert_eq!((r.tail.start, r.tail.end), (10, 17));
    }

    #[test]
    fn dangling_reference() {
        let ann = "T1\tDrug 10 17\taspirin\nR1\tStrength-Drug Arg1:T99 Arg2:T1\n";
        match parse_standoff("d1", TEXT, ann) {
            Err(CorpusError::DanglingReference { doc_id, line, id }) => {
                assert_eq!((doc_id.as_str(), line, id.as_str()), ("d1", 2, "T99"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offset_mismatch() {
        let ann = "T1\tDrug 9 16\taspirin\n";
        assert!(matches!(
            parse_standoff("d1", TEXT, ann),
            Err(CorpusError::OffsetMismatch { line: 1, .. })
        ));
    }

    #[test]
    fn empty_annotation_file() {
        assert!(parse_standoff("d1", TEXT, "").unwrap().is_empty());
    }

    #[test]
    fn discontinuous_entity_and_ignored_lines() {
        let text = "apply cream topical";
        let ann = "T1\tForm 0 5;12 19\tapply topical\nT2\tDrug 6 11\tcream\n#1\tAnnotatorNotes T1\tnote\nA1\tNegated T2\nR1\tForm-Drug Arg1:T1 Arg2:T2\n";
        let rels = parse_standoff("d", text, ann).unwrap();
        assert_eq!(rels[0].head.fragments, vec![(0, 5), (12, 19)]);
        assert_eq!((rels[0].head.start, rels[0].head.end), (0, 19));
    }

    #[test]
    fn unicode_offsets_are_characters() {
        let text = "né aspirin";
        let ann = "T1\tDrug 3 10\taspirin\n";
        assert!(parse_standoff("d", text, ann).is_ok());
    }

    #[test]
    fn standoff_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("100.txt"), TEXT).unwrap();
        fs::write(
            dir.path().join("100.ann"),
            "T1\tDrug 10 17\taspirin\nT2\tStrength 18 23\t81 mg\nR1\tStrength-Drug Arg1:T2 Arg2:T1\n",
        )
        .unwrap();
        fs::write(dir.path().join("101.txt"), "No meds.").unwrap();
        fs::write(dir.path().join("101.ann"), "").unwrap();
        let corpus = load_any(dir.path()).unwrap();
        assert_eq!(corpus.documents.len(), 2);
        assert_eq!(corpus.relations.len(), 1);
        assert_eq!(corpus.documents[0].dataset_tag, DatasetTag::N2c2);
    }

    #[test]
    fn ade_records() {
        let data = r#"{"text": "Naproxen-induced pseudoporphyria in a child.", "drug": "naproxen", "effect": "pseudoporphyria"}
{"text": "Naproxen-induced pseudoporphyria in a child.", "drug": "Naproxen", "effect": "pseudoporphyria", "indexes": {"drug": {"start_char": [0], "end_char": [8]}, "effect": {"start_char": [17], "end_char": [32]}}}
{"text": "He took 500 mg of ibuprofen.", "drug": "ibuprofen", "dosage": "500 mg"}
"#;
        let corpus = read_ade_corpus(data.as_bytes()).unwrap();
        assert_eq!(corpus.documents.len(), 2);
        assert_eq!(corpus.relations.len(), 3);
        let r0 = &corpus.relations[0];
        assert_eq!(r0.rtype, RelationType::DrugAde);
        assert_eq!((r0.head.start, r0.head.end), (NO_OFFSET, NO_OFFSET));
        assert_eq!(r0.drug_and_attribute(), ("naproxen", "pseudoporphyria"));
        let r1 = &corpus.relations[1];
        assert_eq!(r1.head.span(), Some((0, 8)));
        assert_eq!(r1.tail.span(), Some((17, 32)));
        assert_eq!(corpus.relations[2].rtype, RelationType::DrugDosage);
    }

    #[test]
    fn ade_missing_drug() {
        let data = r#"{"text": "x", "effect": "rash"}"#;
        assert!(matches!(read_ade_corpus(data.as_bytes()), Err(CorpusError::Schema { line: 1, .. })));
    }

    #[test]
    fn stats_counts_each_type() {
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
        let mut data = String::new();
        for i in 0..6821 {
            data.push_str(&format!("{{\"text\": \"t{i}\", \"drug\": \"d\", \"effect\": \"e\"}}\n"));
        }
        for i in 0..279 {
            data.push_str(&format!("{{\"text\": \"u{i}\", \"drug\": \"d\", \"dosage\": \"1 mg\"}}\n"));
        }
        let corpus = read_ade_corpus(data.as_bytes()).unwrap();
        let stats = corpus.stats();
        assert_eq!(stats.count(RelationType::DrugAde), 6821);
        assert_eq!(stats.count(RelationType::DrugDosage), 279);
        assert_eq!(stats.total, 7100);
    }

    #[test]
    fn relation_type_names() {
        for r in RelationType::ALL {
            assert_eq!(r.as_str().parse::<RelationType>().unwrap(), r);
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.as_str()));
        }
        assert!("Drug-Route".parse::<RelationType>().is_err());
    }
}
