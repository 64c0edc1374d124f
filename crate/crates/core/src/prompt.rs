//! Prompt templates and rendering.
//!
//! A template file is a small `key: value` header, a `---` line, the body, and
//! then the few-shot examples:
//!
//! ```text
//! template_id: default-umls
//! mode: umls
//! placeholders: entity_type, output_format, examples, note_text, medication_list
//! ---
//! Extract {entity_type} information ...
//! Text: {note_text}
//! {medication_list}
//! Output:
//! === shot Strength-Drug
//! Started metoprolol tartrate 25 mg PO BID.
//! >>> [('metoprolol tartrate', '25 mg')]
//! ```
//!
//! Bodies are split into literal and placeholder segments when loaded, and
//! rendering substitutes segments in one pass, so text inserted for one
//! placeholder is never scanned for further placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, RelationType};
use crate::hashing::FieldHasher;
use crate::llm::GenerationParams;
use crate::mapper::MedicationList;
use crate::parse::{format_instruction, parse_pairs, serialize_pairs};

/// Serialized form of an empty medication list.
pub const EMPTY_MEDICATIONS: &str = "(none)";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template}: {message}")]
    Invalid { template: String, message: String },
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("no template for mode {0}")]
    MissingMode(PromptMode),
    #[error("template library has no examples for relation type {0}")]
    UnknownRelationType(RelationType),
    #[error("template is for mode {template} but {requested} was requested")]
    ModeMismatch { template: PromptMode, requested: PromptMode },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TemplateError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Baseline,
    Umls,
    Rag,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [Self::Baseline, Self::Umls, Self::Rag];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Umls => "umls",
            Self::Rag => "rag",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown mode {s:?} (expected baseline, umls or rag)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Placeholder {
    NoteText,
    MedicationList,
    EntityType,
    Examples,
    OutputFormat,
}

impl Placeholder {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "note_text" => Self::NoteText,
            "medication_list" => Self::MedicationList,
            "entity_type" => Self::EntityType,
            "examples" => Self::Examples,
            "output_format" => Self::OutputFormat,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(Placeholder),
}

fn parse_body(body: &str) -> Result<Vec<Segment>> {
    let mut segments = Vec::new();
    let mut lit = String::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) if c.is_ascii_alphanumeric() || c == '_' => name.push(c),
                        _ => return Err(TemplateError::UnknownPlaceholder(name)),
                    }
                }
                let slot = Placeholder::parse(&name).ok_or(TemplateError::UnknownPlaceholder(name))?;
                if !lit.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut lit)));
                }
                segments.push(Segment::Slot(slot));
            }
            '}' => return Err(TemplateError::UnknownPlaceholder("}".into())),
            c => lit.push(c),
        }
    }
    if !lit.is_empty() {
        segments.push(Segment::Literal(lit));
    }
    Ok(segments)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub example_text: String,
    pub example_pairs: Vec<(String, String)>,
}

/// One template file: a mode's body plus few-shot examples for every relation type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSource {
    pub template_id: String,
    pub mode: PromptMode,
    segments: Vec<Segment>,
    shots: BTreeMap<RelationType, Vec<FewShotExample>>,
}

impl TemplateSource {
    pub fn parse(src: &str) -> Result<Self> {
        let invalid = |template: &str, message: String| TemplateError::Invalid { template: template.into(), message };
        let (header, rest) = src
            .split_once("\n---\n")
            .ok_or_else(|| invalid("?", "missing `---` after the header".into()))?;
        let mut fields = BTreeMap::new();
        for line in header.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| invalid("?", format!("bad header line {line:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let id = fields.get("template_id").cloned().ok_or_else(|| invalid("?", "missing template_id".into()))?;
        let mode: PromptMode = fields
            .get("mode")
            .ok_or_else(|| invalid(&id, "missing mode".into()))?
            .parse()
            .map_err(|e| invalid(&id, e))?;

        let (body, shots_src) = match rest.find("=== shot ") {
            Some(i) if i == 0 || rest[..i].ends_with('\n') => rest.split_at(i),
            _ => (rest, ""),
        };
        let segments = parse_body(body)?;

        let used: Vec<Placeholder> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(p) => Some(*p),
                Segment::Literal(_) => None,
            })
            .collect();
        let count = |p: Placeholder| used.iter().filter(|&&u| u == p).count();
        if count(Placeholder::NoteText) != 1 {
            return Err(invalid(&id, "body must contain {note_text} exactly once".into()));
        }
        match (mode, count(Placeholder::MedicationList)) {
            (PromptMode::Umls, 1) | (PromptMode::Baseline | PromptMode::Rag, 0) => {}
            (PromptMode::Umls, _) => {
                return Err(invalid(&id, "umls templates need exactly one {medication_list}".into()))
            }
            _ => return Err(invalid(&id, "only umls templates may use {medication_list}".into())),
        }
        if let Some(declared) = fields.get("placeholders") {
            let mut declared_set = BTreeSet::new();
            for name in declared.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                declared_set.insert(
                    Placeholder::parse(name).ok_or_else(|| TemplateError::UnknownPlaceholder(name.into()))?,
                );
            }
            let used_set: BTreeSet<Placeholder> = used.iter().copied().collect();
            if declared_set != used_set {
                return Err(invalid(&id, "declared placeholders differ from those used in the body".into()));
            }
        }

        let shots = parse_shots(&id, shots_src)?;
        Ok(Self { template_id: id, mode, segments, shots })
    }

    pub fn shots(&self, rtype: RelationType) -> &[FewShotExample] {
        self.shots.get(&rtype).map(Vec::as_slice).unwrap_or_default()
    }
}

fn parse_shots(id: &str, src: &str) -> Result<BTreeMap<RelationType, Vec<FewShotExample>>> {
    let invalid = |message: String| TemplateError::Invalid { template: id.into(), message };
    let mut shots: BTreeMap<RelationType, Vec<FewShotExample>> = BTreeMap::new();
    let mut current: Option<(RelationType, Vec<&str>)> = None;
    for line in src.lines() {
        if let Some(name) = line.strip_prefix("=== shot ") {
            if current.is_some() {
                return Err(invalid("example without a `>>>` answer line".into()));
            }
            let rtype = name.parse().map_err(|_| invalid(format!("unknown relation type {name:?}")))?;
            current = Some((rtype, Vec::new()));
        } else if let Some(answer) = line.strip_prefix(">>> ") {
            let (rtype, text) = current.take().ok_or_else(|| invalid("answer line outside an example".into()))?;
            let parsed = parse_pairs(answer, "", rtype, PromptMode::Baseline);
            if parsed.pairs.is_empty() || !parsed.clean {
                return Err(invalid(format!("example answer {answer:?} has no pairs")));
            }
            shots.entry(rtype).or_default().push(FewShotExample {
                example_text: text.join("\n"),
                example_pairs: parsed.pairs.into_iter().map(|p| (p.head, p.tail)).collect(),
            });
        } else if let Some((_, text)) = current.as_mut() {
            text.push(line);
        } else if !line.trim().is_empty() {
            return Err(invalid(format!("unexpected line after body: {line:?}")));
        }
    }
    if current.is_some() {
        return Err(invalid("example without a `>>>` answer line".into()));
    }
    Ok(shots)
}

/// A template bound to one relation type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub mode: PromptMode,
    pub target_rtype: RelationType,
    pub shots: Vec<FewShotExample>,
    segments: Vec<Segment>,
}

/// One template per mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateLibrary {
    templates: BTreeMap<PromptMode, TemplateSource>,
}

const DEFAULT_BASELINE: &str = include_str!("../templates/baseline.tmpl");
const DEFAULT_UMLS: &str = include_str!("../templates/umls.tmpl");
const DEFAULT_RAG: &str = include_str!("../templates/rag.tmpl");

impl TemplateLibrary {
    pub fn from_sources<I: IntoIterator<Item = TemplateSource>>(sources: I) -> Self {
        Self { templates: sources.into_iter().map(|t| (t.mode, t)).collect() }
    }

    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let parse = |s| TemplateSource::parse(s).expect("built-in template is valid");
        Self::from_sources([parse(DEFAULT_BASELINE), parse(DEFAULT_UMLS), parse(DEFAULT_RAG)])
    }

    /// Loads every `*.tmpl` file in `dir`. A later file for the same mode
    /// replaces an earlier one (files are read in name order).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
            .collect();
        paths.sort();
        let mut sources = Vec::new();
        for p in paths {
            sources.push(TemplateSource::parse(&fs::read_to_string(p)?)?);
        }
        Ok(Self::from_sources(sources))
    }

    pub fn source(&self, mode: PromptMode) -> Option<&TemplateSource> {
        self.templates.get(&mode)
    }
}

/// The mode's base template with `{entity_type}` bound to the relation's
/// non-drug entity and the relation's few-shot examples attached.
pub fn template_for(rtype: RelationType, mode: PromptMode, library: &TemplateLibrary) -> Result<PromptTemplate> {
    let src = library.source(mode).ok_or(TemplateError::MissingMode(mode))?;
    let shots = src.shots(rtype);
    if shots.is_empty() {
        return Err(TemplateError::UnknownRelationType(rtype));
    }
    let word = rtype.entity_word();
    let mut segments: Vec<Segment> = Vec::new();
    for seg in &src.segments {
        let seg = match seg {
            Segment::Slot(Placeholder::EntityType) => Segment::Literal(word.to_string()),
            Segment::Slot(Placeholder::OutputFormat) => Segment::Literal(format_instruction(word)),
            other => other.clone(),
        };
        match (segments.last_mut(), seg) {
            (Some(Segment::Literal(prev)), Segment::Literal(next)) => prev.push_str(&next),
            (_, seg) => segments.push(seg),
        }
    }
    Ok(PromptTemplate {
        template_id: src.template_id.clone(),
        mode,
        target_rtype: rtype,
        shots: shots.to_vec(),
        segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub prompt_id: String,
    pub text: String,
    pub doc_id: String,
    pub rtype: RelationType,
    pub mode: PromptMode,
    pub medication_terms: Vec<String>,
    pub params: GenerationParams,
}

/// Content hash over the prompt text, mode and generation parameters.
pub fn prompt_id(text: &str, mode: PromptMode, params: &GenerationParams) -> String {
    FieldHasher::new().field(text).field(mode.as_str()).field(params.fingerprint()).finish()
}

fn render_examples(shots: &[FewShotExample]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pairs = serialize_pairs(s.example_pairs.iter().map(|(h, t)| (h.as_str(), t.as_str())));
            format!("Example {}:\nText: {}\nOutput: {}", i + 1, s.example_text, pairs)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Comma-separated medication terms, or [`EMPTY_MEDICATIONS`].
pub fn medication_line(meds: &MedicationList) -> String {
    if meds.terms.is_empty() {
        EMPTY_MEDICATIONS.to_string()
    } else {
        meds.terms.join(", ")
    }
}

pub fn render(
    template: &PromptTemplate,
    doc: &Document,
    meds: &MedicationList,
    mode: PromptMode,
    params: &GenerationParams,
) -> Result<RenderedPrompt> {
    if template.mode != mode {
        return Err(TemplateError::ModeMismatch { template: template.mode, requested: mode });
    }
    let mut text = String::new();
    for seg in &template.segments {
        match seg {
            Segment::Literal(s) => text.push_str(s),
            Segment::Slot(Placeholder::NoteText) => text.push_str(&doc.text),
            Segment::Slot(Placeholder::MedicationList) => text.push_str(&medication_line(meds)),
            Segment::Slot(Placeholder::Examples) => text.push_str(&render_examples(&template.shots)),
            Segment::Slot(Placeholder::EntityType) => text.push_str(template.target_rtype.entity_word()),
            Segment::Slot(Placeholder::OutputFormat) => {
                text.push_str(&format_instruction(template.target_rtype.entity_word()))
            }
        }
    }
    let medication_terms = if mode == PromptMode::Umls { meds.terms.clone() } else { Vec::new() };
    Ok(RenderedPrompt {
        prompt_id: prompt_id(&text, mode, params),
        text,
        doc_id: doc.doc_id.clone(),
        rtype: template.target_rtype,
        mode,
        medication_terms,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetTag;

    fn doc(text: &str) -> Document {
        Document { doc_id: "d1".into(), text: text.into(), dataset_tag: DatasetTag::N2c2 }
    }

    fn meds(terms: &[&str]) -> MedicationList {
        MedicationList { terms: terms.iter().map(|s| s.to_string()).collect(), matches: vec![] }
    }

    fn rendered(rtype: RelationType, mode: PromptMode, d: &Document, m: &MedicationList) -> RenderedPrompt {
        let lib = TemplateLibrary::builtin();
        let t = template_for(rtype, mode, &lib).unwrap();
        render(&t, d, m, mode, &GenerationParams::default()).unwrap()
    }

    #[test]
    fn builtin_library_covers_every_relation() {
        let lib = TemplateLibrary::builtin();
        for mode in PromptMode::ALL {
            for r in RelationType::ALL {
                let t = template_for(r, mode, &lib).unwrap();
                assert_eq!(t.shots.len(), 2, "{mode} {r}");
            }
        }
    }

    #[test]
    fn umls_prompt_lists_medications() {
        let d = doc("Plavix 75 mg, ASA 325, Cipro 250 mg, prednisone 60 mg.");
        let p = rendered(RelationType::StrengthDrug, PromptMode::Umls, &d, &meds(&["ASA", "Cipro", "Plavix", "prednisone"]));
        assert!(p.text.contains("ASA, Cipro, Plavix, prednisone"));
        assert_eq!(p.medication_terms.len(), 4);
        for t in &p.medication_terms {
            assert!(p.text.contains(t.as_str()));
        }
    }

    #[test]
    fn empty_medication_list() {
        let p = rendered(RelationType::StrengthDrug, PromptMode::Umls, &doc("no meds"), &meds(&[]));
        assert!(p.text.contains("\n(none)\n"));
    }

    #[test]
    fn baseline_ignores_medications() {
        let d = doc("Plavix 75 mg");
        let with = rendered(RelationType::StrengthDrug, PromptMode::Baseline, &d, &meds(&["Plavix"]));
        let without = rendered(RelationType::StrengthDrug, PromptMode::Baseline, &d, &meds(&[]));
        assert_eq!(with.text, without.text);
        assert!(with.medication_terms.is_empty());
        assert!(!with.text.contains("UMLS"));
    }

    #[test]
    fn dosage_template_asks_for_dosage() {
        let lib = TemplateLibrary::builtin();
        let t = template_for(RelationType::DosageDrug, PromptMode::Umls, &lib).unwrap();
        let p = render(&t, &doc("x"), &meds(&[]), PromptMode::Umls, &GenerationParams::default()).unwrap();
        assert!(p.text.contains("Extract dosage information from the text"));
        let b = template_for(RelationType::StrengthDrug, PromptMode::Baseline, &lib).unwrap();
        assert!(!b.segments.contains(&Segment::Slot(Placeholder::MedicationList)));
    }

    #[test]
    fn note_text_is_inserted_verbatim() {
        let d = doc("literal {medication_list} and {note_text} stay put");
        let p = rendered(RelationType::StrengthDrug, PromptMode::Umls, &d, &meds(&["ASA"]));
        assert!(p.text.contains("Text: literal {medication_list} and {note_text} stay put\n"));
        assert_eq!(p.text.matches("ASA").count(), 1);
    }

    #[test]
    fn deterministic_ids() {
        let d = doc("aspirin 81 mg");
        let a = rendered(RelationType::StrengthDrug, PromptMode::Umls, &d, &meds(&["aspirin"]));
        let b = rendered(RelationType::StrengthDrug, PromptMode::Umls, &d, &meds(&["aspirin"]));
        assert_eq!(a, b);
        let c = rendered(RelationType::StrengthDrug, PromptMode::Baseline, &d, &meds(&["aspirin"]));
        assert_ne!(a.prompt_id, c.prompt_id);
        let lib = TemplateLibrary::builtin();
        let t = template_for(RelationType::StrengthDrug, PromptMode::Umls, &lib).unwrap();
        let hot = GenerationParams { temperature: 0.7, ..Default::default() };
        let e = render(&t, &d, &meds(&["aspirin"]), PromptMode::Umls, &hot).unwrap();
        assert_eq!(e.text, a.text);
        assert_ne!(e.prompt_id, a.prompt_id);
    }

    #[test]
    fn mode_mismatch() {
        let lib = TemplateLibrary::builtin();
        let t = template_for(RelationType::StrengthDrug, PromptMode::Umls, &lib).unwrap();
        assert!(matches!(
            render(&t, &doc("x"), &meds(&[]), PromptMode::Baseline, &GenerationParams::default()),
            Err(TemplateError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_templates() {
        let unknown = "template_id: t\nmode: baseline\n---\n{note_text} {drug_name}\n";
        assert!(matches!(TemplateSource::parse(unknown), Err(TemplateError::UnknownPlaceholder(n)) if n == "drug_name"));
        let twice = "template_id: t\nmode: baseline\n---\n{note_text} {note_text}\n";
        assert!(TemplateSource::parse(twice).is_err());
        let meds_in_baseline = "template_id: t\nmode: baseline\n---\n{note_text} {medication_list}\n";
        assert!(TemplateSource::parse(meds_in_baseline).is_err());
        let umls_without = "template_id: t\nmode: umls\n---\n{note_text}\n";
        assert!(TemplateSource::parse(umls_without).is_err());
        let declared = "template_id: t\nmode: baseline\nplaceholders: note_text, examples\n---\n{note_text}\n";
        assert!(TemplateSource::parse(declared).is_err());
        let escaped = "template_id: t\nmode: baseline\n---\n{{literal}} {note_text}\n";
        let src = TemplateSource::parse(escaped).unwrap();
        assert_eq!(src.segments[0], Segment::Literal("{literal} ".into()));
    }

    #[test]
    fn missing_shots_is_unknown_relation() {
        let src = TemplateSource::parse("template_id: t\nmode: baseline\n---\n{note_text}\n").unwrap();
        let lib = TemplateLibrary::from_sources([src]);
        assert!(matches!(
            template_for(RelationType::RouteDrug, PromptMode::Baseline, &lib),
            Err(TemplateError::UnknownRelationType(RelationType::RouteDrug))
        ));
        assert!(matches!(
            template_for(RelationType::RouteDrug, PromptMode::Umls, &lib),
            Err(TemplateError::MissingMode(PromptMode::Umls))
        ));
    }
}
