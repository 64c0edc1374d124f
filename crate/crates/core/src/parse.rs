//! Recovery parser for tuple-list completions such as
//! `[('aspirin', '81 mg'), ('Plavix', '75 mg')]`.
//!
//! The parser never fails. It scans for parenthesized 2-tuples of quoted
//! strings anywhere in the text, so tuples survive broken list syntax and
//! surrounding prose; problems are reported as diagnostics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::RelationType;
use crate::prompt::PromptMode;
use crate::text::{is_quote, normalize_surface};

/// Order of the two elements in every emitted tuple. Templates render their
/// output instruction from this, and the parser reads tuples the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleOrder {
    DrugFirst,
}

pub const TUPLE_ORDER: TupleOrder = TupleOrder::DrugFirst;

/// Output-format instruction for an entity word, consistent with [`TUPLE_ORDER`].
pub fn format_instruction(entity_word: &str) -> String {
    match TUPLE_ORDER {
        TupleOrder::DrugFirst => format!(
            "Return a Python-style list of tuples with the drug first and the {entity_word} second, \
             e.g. [('drug', '{entity_word}')]. Return [] if there are none."
        ),
    }
}

/// Longest element, in characters, the scanner will consider.
const MAX_ELEMENT_CHARS: usize = 1000;

/// One extracted tuple. `head` is the first tuple element (the drug, per
/// [`TUPLE_ORDER`]) and `tail` the second.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractedPair {
    pub head: String,
    pub tail: String,
    pub doc_id: String,
    pub rtype: RelationType,
    pub source_mode: PromptMode,
}

impl ExtractedPair {
    pub fn key(&self) -> (String, String) {
        (normalize_surface(&self.head), normalize_surface(&self.tail))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub pairs: Vec<ExtractedPair>,
    pub diagnostics: Vec<Diagnostic>,
    pub clean: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Collapse pairs that are equal after normalization.
    pub dedup: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { dedup: true }
    }
}

struct Scanner<'a> {
    chars: &'a [char],
}

impl Scanner<'_> {
    fn skip_ws(&self, mut i: usize) -> usize {
        while i < self.chars.len() && self.chars[i].is_whitespace() {
            i += 1;
        }
        i
    }

    /// Quoted element starting at `i`. The closing quote is the first quote
    /// character followed (after whitespace) by one of `terminators`, so
    /// apostrophes inside the element are kept.
    fn element(&self, i: usize, terminators: &[char]) -> Option<(String, usize)> {
        if !self.chars.get(i).copied().is_some_and(is_quote) {
            return None;
        }
        let limit = self.chars.len().min(i + 2 + MAX_ELEMENT_CHARS);
        for j in i + 1..limit {
            if !is_quote(self.chars[j]) {
                continue;
            }
            let next = self.skip_ws(j + 1);
            if self.chars.get(next).is_some_and(|c| terminators.contains(c)) {
                let content: String = self.chars[i + 1..j].iter().collect();
                return Some((content, j + 1));
            }
        }
        None
    }

    /// Tuple whose `(` is at `i`: `(elem, elem[,])`. Returns the elements and
    /// the index after `)`.
    fn tuple(&self, i: usize) -> Option<(String, String, usize)> {
        let mut at = self.skip_ws(i + 1);
        let (first, next) = self.element(at, &[','])?;
        at = self.skip_ws(next);
        if self.chars.get(at) != Some(&',') {
            return None;
        }
        at = self.skip_ws(at + 1);
        let (second, next) = self.element(at, &[',', ')'])?;
        at = self.skip_ws(next);
        if self.chars.get(at) == Some(&',') {
            at = self.skip_ws(at + 1);
        }
        if self.chars.get(at) != Some(&')') {
            return None;
        }
        Some((first, second, at + 1))
    }

    fn looks_like_tuple(&self, i: usize) -> bool {
        let at = self.skip_ws(i + 1);
        self.chars.get(at).copied().is_some_and(is_quote)
    }

    fn has_empty_list(&self) -> bool {
        self.chars.iter().enumerate().any(|(i, &c)| {
            c == '[' && self.chars.get(self.skip_ws(i + 1)) == Some(&']')
        })
    }
}

pub fn parse_pairs(raw: &str, doc_id: &str, rtype: RelationType, mode: PromptMode) -> ParseOutcome {
    parse_pairs_with(raw, doc_id, rtype, mode, ParseOptions::default())
}

pub fn parse_pairs_with(
    raw: &str,
    doc_id: &str,
    rtype: RelationType,
    mode: PromptMode,
    opts: ParseOptions,
) -> ParseOutcome {
    let chars: Vec<char> = raw.chars().collect();
    let scanner = Scanner { chars: &chars };
    let mut diagnostics = Vec::new();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0usize;

    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '(' {
            i += 1;
            continue;
        }
        match scanner.tuple(i) {
            Some((head, tail, next)) => {
                let (head, tail) = (head.trim().to_string(), tail.trim().to_string());
                if head.is_empty() || tail.is_empty() {
                    diagnostics.push(Diagnostic {
                        severity: Severity::Warning,
                        message: format!("dropped tuple with an empty element at char {i}"),
                    });
                } else {
                    let pair = ExtractedPair { head, tail, doc_id: doc_id.into(), rtype, source_mode: mode };
                    if !opts.dedup || seen.insert(pair.key()) {
                        pairs.push(pair);
                    } else {
                        duplicates += 1;
                    }
                }
                i = next;
            }
            None => {
                if scanner.looks_like_tuple(i) {
                    diagnostics.push(Diagnostic {
                        severity: Severity::Warning,
                        message: format!("skipped malformed tuple at char {i}"),
                    });
                }
                i += 1;
            }
        }
    }

    if duplicates > 0 {
        diagnostics.push(Diagnostic {
            severity: Severity::Info,
            message: format!("collapsed {duplicates} duplicate pair(s)"),
        });
    }
    if pairs.is_empty() {
        if !scanner.has_empty_list() {
            diagnostics.push(Diagnostic {
                severity: Severity::Error,
                message: "no tuple list found in completion".into(),
            });
        }
    } else if !chars.contains(&'[') {
        diagnostics.push(Diagnostic {
            severity: Severity::Warning,
            message: "tuples were not enclosed in a list".into(),
        });
    }
    let clean = !diagnostics.iter().any(|d| d.severity == Severity::Error);
    ParseOutcome { pairs, diagnostics, clean }
}

fn quote(s: &str) -> String {
    if s.contains('\'') && !s.contains('"') {
        format!("\"{s}\"")
    } else {
        format!("'{s}'")
    }
}

/// Canonical tuple-list text for `(head, tail)` pairs.
pub fn serialize_pairs<'a, I>(pairs: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let items: Vec<String> = pairs
        .into_iter()
        .map(|(h, t)| format!("({}, {})", quote(h), quote(t)))
        .collect();
    format!("[{}]", items.join(", "))
}
