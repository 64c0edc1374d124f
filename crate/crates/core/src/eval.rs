//! Precision, recall and F1 over extracted pairs.
//!
//! A predicted pair matches a gold relation when the normalized drug and the
//! normalized attribute are both equal. Counts are summed across documents
//! before computing per-relation metrics (micro); the per-relation rows are
//! then averaged without weights (macro).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GoldRelation, RelationType};
use crate::parse::ExtractedPair;
use crate::prompt::PromptMode;

pub use crate::text::normalize_surface;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("inputs span several documents: {0:?}")]
    MixedDocuments(Vec<String>),
    #[error("inputs span several relation types: {0:?}")]
    MixedRelationTypes(Vec<RelationType>),
    #[error("no rows to average")]
    EmptyRows,
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn metrics(&self) -> Prf {
        Prf::from_pr(self.precision(), self.recall())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for EvalCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for EvalCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl<'a> Sum<&'a EvalCounts> for EvalCounts {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64, f1: f64) -> Self {
        Self { precision, recall, f1 }
    }

    /// F1 as the harmonic mean of `p` and `r`, 0 when both are 0.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1 }
    }
}

/// How a predicted pair is compared to a gold pair after normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Exact,
    /// Each predicted element contains, or is contained in, the gold element.
    /// For sensitivity analysis only.
    Containment,
}

type Key = (String, String);

fn gold_key(g: &GoldRelation) -> Key {
    let (drug, attr) = g.drug_and_attribute();
    (normalize_surface(drug), normalize_surface(attr))
}

fn loosely_equal(a: &str, b: &str) -> bool {
    !a.is_empty() && !b.is_empty() && (a.contains(b) || b.contains(a))
}

fn keys_match(mode: MatchMode, p: &Key, g: &Key) -> bool {
    match mode {
        MatchMode::Exact => p == g,
        MatchMode::Containment => loosely_equal(&p.0, &g.0) && loosely_equal(&p.1, &g.1),
    }
}

/// Maximum bipartite matching by augmenting paths. Sizes per document are
/// small, so the quadratic adjacency is fine.
fn max_matching(preds: &[Key], golds: &[Key], mode: MatchMode) -> u64 {
    let adj: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| (0..golds.len()).filter(|&j| keys_match(mode, p, &golds[j])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; golds.len()];
    fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut n = 0;
    for i in 0..preds.len() {
        let mut seen = vec![false; golds.len()];
        if augment(i, &adj, &mut owner, &mut seen) {
            n += 1;
        }
    }
    n
}

/// Counts for one document and relation type. Pairs that normalize equal are
/// counted once on each side.
pub fn score_document(pred: &[ExtractedPair], gold: &[GoldRelation]) -> Result<EvalCounts> {
    score_document_with(pred, gold, MatchMode::Exact)
}

pub fn score_document_with(pred: &[ExtractedPair], gold: &[GoldRelation], mode: MatchMode) -> Result<EvalCounts> {
    let docs: BTreeSet<&str> =
        pred.iter().map(|p| p.doc_id.as_str()).chain(gold.iter().map(|g| g.doc_id.as_str())).collect();
    if docs.len() > 1 {
        return Err(EvalError::MixedDocuments(docs.into_iter().map(String::from).collect()));
    }
    let rtypes: BTreeSet<RelationType> = pred.iter().map(|p| p.rtype).chain(gold.iter().map(|g| g.rtype)).collect();
    if rtypes.len() > 1 {
        return Err(EvalError::MixedRelationTypes(rtypes.into_iter().collect()));
    }
    let preds: BTreeSet<Key> = pred.iter().map(ExtractedPair::key).collect();
    let golds: BTreeSet<Key> = gold.iter().map(gold_key).collect();
    let tp = match mode {
        MatchMode::Exact => preds.intersection(&golds).count() as u64,
        MatchMode::Containment => {
            let p: Vec<Key> = preds.iter().cloned().collect();
            let g: Vec<Key> = golds.iter().cloned().collect();
            max_matching(&p, &g, mode)
        }
    };
    Ok(EvalCounts { tp, fp: preds.len() as u64 - tp, fn_: golds.len() as u64 - tp })
}

/// Sums the counts first, then derives P, R and F1 from the sums.
pub fn micro_metrics(counts: &[EvalCounts]) -> Prf {
    counts.iter().sum::<EvalCounts>().metrics()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub rtype: RelationType,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: EvalCounts,
}

impl RelationMetrics {
    pub fn from_counts(rtype: RelationType, counts: EvalCounts) -> Self {
        let m = counts.metrics();
        Self { rtype, precision: m.precision, recall: m.recall, f1: m.f1, counts }
    }

    /// A row known only by its reported values, such as one copied from a
    /// published table. Counts are left at zero.
    pub fn from_reported(rtype: RelationType, precision: f64, recall: f64, f1: f64) -> Self {
        Self { rtype, precision, recall, f1, counts: EvalCounts::default() }
    }

    pub fn prf(&self) -> Prf {
        Prf::new(self.precision, self.recall, self.f1)
    }
}

/// Unweighted column means of the rows.
pub fn macro_average(rows: &[RelationMetrics]) -> Result<Prf> {
    if rows.is_empty() {
        return Err(EvalError::EmptyRows);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&RelationMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(Prf::new(mean(|r| r.precision), mean(|r| r.recall), mean(|r| r.f1)))
}

/// Result of checking a table's stated average against its own rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageCheck {
    pub computed: Prf,
    pub reported: Prf,
    pub max_abs_diff: f64,
    pub consistent: bool,
}

pub fn check_reported_average(rows: &[RelationMetrics], reported: Prf, tolerance: f64) -> Result<AverageCheck> {
    let computed = macro_average(rows)?;
    let max_abs_diff = [
        (computed.precision - reported.precision).abs(),
        (computed.recall - reported.recall).abs(),
        (computed.f1 - reported.f1).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(AverageCheck { computed, reported, max_abs_diff, consistent: max_abs_diff <= tolerance })
}

/// Scores every (document, relation type) cell of `rtypes` x `doc_ids` and
/// sums per relation type. Predictions and gold outside the cells are ignored.
pub fn evaluate_pairs(
    pred: &[ExtractedPair],
    gold: &[GoldRelation],
    doc_ids: &[String],
    rtypes: &[RelationType],
    mode: MatchMode,
) -> Vec<RelationMetrics> {
    let docs: HashSet<&str> = doc_ids.iter().map(String::as_str).collect();
    type Cell<'a> = (Vec<ExtractedPair>, Vec<GoldRelation>);
    let mut cells: BTreeMap<(RelationType, &str), Cell> = BTreeMap::new();
    for p in pred.iter().filter(|p| docs.contains(p.doc_id.as_str())) {
        cells.entry((p.rtype, p.doc_id.as_str())).or_default().0.push(p.clone());
    }
    for g in gold.iter().filter(|g| docs.contains(g.doc_id.as_str())) {
        cells.entry((g.rtype, g.doc_id.as_str())).or_default().1.push(g.clone());
    }
    rtypes
        .iter()
        .map(|&rtype| {
            let counts = cells
                .range((rtype, "")..)
                .take_while(|((r, _), _)| *r == rtype)
                .map(|(_, (p, g))| score_document_with(p, g, mode).expect("cells are grouped by document and type"))
                .sum();
            RelationMetrics::from_counts(rtype, counts)
        })
        .collect()
}

/// Descriptive fields of the run being scored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub mode: Option<PromptMode>,
    pub model_id: String,
    pub documents: usize,
    /// Hash over the sorted document ids scored.
    pub slice_hash: String,
    pub match_mode: MatchMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub per_relation: Vec<RelationMetrics>,
    pub macro_average: Prf,
    /// Counts summed over every relation type.
    pub micro_overall: Prf,
    /// Containment-matching rows, when requested; kept apart from the exact rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lenient: Option<Vec<RelationMetrics>>,
}

impl EvalReport {
    /// Assembles a report. With no rows the averages are zero.
    pub fn new(metadata: ReportMetadata, per_relation: Vec<RelationMetrics>) -> Self {
        let macro_average = macro_average(&per_relation).unwrap_or_default();
        let counts: Vec<EvalCounts> = per_relation.iter().map(|r| r.counts).collect();
        Self { metadata, micro_overall: micro_metrics(&counts), macro_average, per_relation, lenient: None }
    }

    pub fn label(&self) -> String {
        match self.metadata.mode {
            Some(m) => format!("{} {}", self.metadata.model_id, m),
            None => self.metadata.model_id.clone(),
        }
    }

    /// Plain-text table, three decimals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.label());
        render_rows(&mut out, &self.per_relation, self.macro_average, self.micro_overall);
        if let Some(rows) = &self.lenient {
            let _ = writeln!(out, "\nContainment matching");
            let counts: Vec<EvalCounts> = rows.iter().map(|r| r.counts).collect();
            render_rows(&mut out, rows, macro_average(rows).unwrap_or_default(), micro_metrics(&counts));
        }
        out
    }
}

fn render_rows(out: &mut String, rows: &[RelationMetrics], avg: Prf, micro: Prf) {
    let _ = writeln!(out, "{:<18} {:>7} {:>7} {:>9} {:>6} {:>6} {:>6}", "Relation", "P", "R", "Micro F1", "TP", "FP", "FN");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:>7.3} {:>7.3} {:>9.3} {:>6} {:>6} {:>6}",
            r.rtype.as_str(),
            r.precision,
            r.recall,
            r.f1,
            r.counts.tp,
            r.counts.fp,
            r.counts.fn_
        );
    }
    let _ = writeln!(out, "{:<18} {:>7.3} {:>7.3} {:>9.3}", "Average", avg.precision, avg.recall, avg.f1);
    let _ = writeln!(out, "{:<18} {:>7.3} {:>7.3} {:>9.3}", "Micro (all)", micro.precision, micro.recall, micro.f1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GoldEntity, NO_OFFSET};

    fn pair(doc: &str, drug: &str, attr: &str) -> ExtractedPair {
        ExtractedPair {
            head: drug.into(),
            tail: attr.into(),
            doc_id: doc.into(),
            rtype: RelationType::StrengthDrug,
            source_mode: PromptMode::Baseline,
        }
    }

    fn ent(label: &str, s: &str) -> GoldEntity {
        GoldEntity {
            entity_id: String::new(),
            label: label.into(),
            start: NO_OFFSET,
            end: NO_OFFSET,
            surface: s.into(),
            fragments: vec![],
        }
    }

    fn gold(doc: &str, drug: &str, attr: &str) -> GoldRelation {
        GoldRelation {
            doc_id: doc.into(),
            rtype: RelationType::StrengthDrug,
            head: ent("Strength", attr),
            tail: ent("Drug", drug),
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_surface("  Plavix "), "plavix");
        assert_eq!(normalize_surface("81  mg"), "81 mg");
        assert_eq!(normalize_surface("'ASA'"), "asa");
    }

    #[test]
    fn document_scores() {
        let c = score_document(&[pair("d", "aspirin", "81 mg")], &[gold("d", "aspirin", "81 mg")]).unwrap();
        assert_eq!(c, EvalCounts::new(1, 0, 0));
        let c = score_document(
            &[pair("d", "aspirin", "81 mg")],
            &[gold("d", "aspirin", "81 mg"), gold("d", "plavix", "75 mg")],
        )
        .unwrap();
        assert_eq!(c, EvalCounts::new(1, 0, 1));
        let c = score_document(
            &[pair("d", "aspirin", "81 mg"), pair("d", "tylenol", "500 mg")],
            &[gold("d", "aspirin", "81 mg")],
        )
        .unwrap();
        assert_eq!(c, EvalCounts::new(1, 1, 0));
    }

    #[test]
    fn duplicates_collapse_and_case_is_ignored() {
        let c = score_document(
            &[pair("d", "Aspirin", "81  mg"), pair("d", "'aspirin'", "81 mg")],
            &[gold("d", "ASPIRIN", "81 mg"), gold("d", "aspirin", "81 mg")],
        )
        .unwrap();
        assert_eq!(c, EvalCounts::new(1, 0, 0));
    }

    #[test]
    fn mixed_documents_rejected() {
        let e = score_document(&[pair("a", "x", "y")], &[gold("b", "x", "y")]).unwrap_err();
        assert_eq!(e, EvalError::MixedDocuments(vec!["a".into(), "b".into()]));
    }

    #[test]
    fn containment_is_separate_and_looser() {
        let p = [pair("d", "aspirin", "81 mg tablet")];
        let g = [gold("d", "aspirin", "81 mg")];
        assert_eq!(score_document(&p, &g).unwrap().tp, 0);
        assert_eq!(score_document_with(&p, &g, MatchMode::Containment).unwrap(), EvalCounts::new(1, 0, 0));
        // One prediction cannot satisfy two gold pairs.
        let g2 = [gold("d", "aspirin", "81 mg"), gold("d", "aspirin", "mg tablet")];
        assert_eq!(score_document_with(&p, &g2, MatchMode::Containment).unwrap(), EvalCounts::new(1, 0, 1));
    }

    #[test]
    fn micro_examples() {
        let m = micro_metrics(&[EvalCounts::new(1, 0, 1), EvalCounts::new(1, 1, 0)]);
        assert!(close(m.precision, 2.0 / 3.0) && close(m.recall, 2.0 / 3.0) && close(m.f1, 2.0 / 3.0));
        assert_eq!(micro_metrics(&[EvalCounts::new(3, 0, 0), EvalCounts::new(2, 0, 0)]), Prf::new(1.0, 1.0, 1.0));
        assert_eq!(micro_metrics(&[EvalCounts::new(0, 0, 4)]), Prf::default());
        assert_eq!(micro_metrics(&[]), Prf::default());
    }

    #[test]
    fn macro_examples() {
        let rows: Vec<RelationMetrics> = [0.77, 0.78, 0.79, 0.74, 0.69, 0.74, 0.78]
            .iter()
            .map(|&p| RelationMetrics::from_reported(RelationType::StrengthDrug, p, 0.0, 0.0))
            .collect();
        let avg = macro_average(&rows).unwrap();
        assert!((avg.precision - 0.7557142857).abs() < 1e-9);
        let one = RelationMetrics::from_reported(RelationType::AdeDrug, 0.4, 0.5, 0.6);
        assert_eq!(macro_average(&[one]).unwrap(), Prf::new(0.4, 0.5, 0.6));
        assert_eq!(macro_average(&[]), Err(EvalError::EmptyRows));
    }

    #[test]
    fn micro_and_macro_differ() {
        // Strength: tp 1, fp 0, fn 0 -> P=R=F1=1. Route: tp 1, fp 3, fn 1 -> P=1/4, R=1/2, F1=1/3.
        let rows = [
            RelationMetrics::from_counts(RelationType::StrengthDrug, EvalCounts::new(1, 0, 0)),
            RelationMetrics::from_counts(RelationType::RouteDrug, EvalCounts::new(1, 3, 1)),
        ];
        let mac = macro_average(&rows).unwrap();
        assert!(close(mac.precision, 0.625) && close(mac.recall, 0.75) && close(mac.f1, 2.0 / 3.0));
        let mic = micro_metrics(&[rows[0].counts, rows[1].counts]);
        assert!(close(mic.precision, 0.4) && close(mic.recall, 2.0 / 3.0) && close(mic.f1, 0.5));
    }

    #[test]
    fn report_with_no_rows_is_zero() {
        let r = EvalReport::new(ReportMetadata::default(), vec![]);
        assert_eq!(r.macro_average, Prf::default());
        assert!(r.render_table().contains("Average"));
    }

    #[test]
    fn evaluate_groups_by_cell() {
        let pred = [pair("a", "x", "1"), pair("b", "y", "2"), pair("zz", "q", "q")];
        let gold = [gold("a", "x", "1"), gold("b", "y", "3")];
        let rows = evaluate_pairs(
            &pred,
            &gold,
            &["a".into(), "b".into()],
            &[RelationType::StrengthDrug, RelationType::RouteDrug],
            MatchMode::Exact,
        );
        assert_eq!(rows[0].counts, EvalCounts::new(1, 1, 1));
        assert_eq!(rows[1].counts, EvalCounts::default());
    }
}
