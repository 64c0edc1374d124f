//! Dictionary-based concept mapping.
//!
//! [`DictionaryMapper`] finds leftmost-longest, non-overlapping occurrences of
//! lexicon terms in a document. The text is walked through a character trie
//! built from the normalized lexicon keys; case is folded and whitespace runs
//! collapse to a single space during the walk, so a match's surface always
//! normalizes back to its key.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::lexicon::{normalize_term, ConceptLexicon, SemanticFilter};
use crate::text::is_word_char;

/// One mapped term occurrence. Offsets are character offsets, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub cui: String,
    pub sty: String,
}

/// The deduplicated medication terms of one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationList {
    /// Surfaces deduplicated by normalized form, sorted by normalized form.
    pub terms: Vec<String>,
    pub matches: Vec<ConceptMatch>,
}

impl MedicationList {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Anything that can map concepts onto a document.
pub trait ConceptMapperProvider: Send + Sync {
    fn map_concepts(&self, doc: &Document) -> Vec<ConceptMatch>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapperConfig {
    /// Terms shorter than this many characters are never matched.
    pub min_term_chars: usize,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self { min_term_chars: 2 }
    }
}

#[derive(Default)]
struct TrieNode {
    children: HashMap<char, usize>,
    /// Lexicon key ending at this node.
    terminal: Option<Arc<str>>,
}

pub struct DictionaryMapper {
    lexicon: Arc<ConceptLexicon>,
    nodes: Vec<TrieNode>,
}

/// A match boundary may not fall between two word characters.
fn boundary_ok(before: Option<char>, after: Option<char>) -> bool {
    !matches!((before, after), (Some(a), Some(b)) if is_word_char(a) && is_word_char(b))
}

impl DictionaryMapper {
    pub fn new(lexicon: Arc<ConceptLexicon>, config: MapperConfig) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for key in lexicon.entries().keys() {
            if key.chars().count() < config.min_term_chars {
                continue;
            }
            let mut at = 0;
            for c in key.chars() {
                let next = nodes.len();
                at = *nodes[at].children.entry(c).or_insert(next);
                if at == next {
                    nodes.push(TrieNode::default());
                }
            }
            nodes[at].terminal = Some(Arc::from(key.as_str()));
        }
        Self { lexicon, nodes }
    }

    pub fn lexicon(&self) -> &ConceptLexicon {
        &self.lexicon
    }

    fn step(&self, at: usize, c: char) -> Option<usize> {
        self.nodes[at].children.get(&c).copied()
    }

    /// Longest match starting at char index `start`: `(end, key)`.
    fn longest_at(&self, chars: &[char], start: usize) -> Option<(usize, Arc<str>)> {
        let mut at = 0;
        let mut best = None;
        let mut in_space = false;
        for (j, &c) in chars.iter().enumerate().skip(start) {
            if c.is_whitespace() {
                if !in_space {
                    match self.step(at, ' ') {
                        Some(next) => at = next,
                        None => break,
                    }
                    in_space = true;
                }
                continue;
            }
            in_space = false;
            let mut dead = false;
            for lc in c.to_lowercase() {
                match self.step(at, lc) {
                    Some(next) => at = next,
                    None => {
                        dead = true;
                        break;
                    }
                }
            }
            if dead {
                break;
            }
            if let Some(key) = &self.nodes[at].terminal {
                let end = j + 1;
                if boundary_ok(chars.get(end - 1).copied(), chars.get(end).copied()) {
                    best = Some((end, key.clone()));
                }
            }
        }
        best
    }

    pub fn map_text(&self, text: &str) -> Vec<ConceptMatch> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let before = if i == 0 { None } else { Some(chars[i - 1]) };
            if chars[i].is_whitespace() || !boundary_ok(before, Some(chars[i])) {
                i += 1;
                continue;
            }
            match self.longest_at(&chars, i) {
                Some((end, key)) => {
                    let concept = self
                        .lexicon
                        .get(&key)
                        .and_then(|set| set.iter().next())
                        .expect("trie keys come from the lexicon");
                    out.push(ConceptMatch {
                        surface: chars[i..end].iter().collect(),
                        start: i,
                        end,
                        cui: concept.cui.clone(),
                        sty: concept.sty.clone(),
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}

impl ConceptMapperProvider for DictionaryMapper {
    fn map_concepts(&self, doc: &Document) -> Vec<ConceptMatch> {
        self.map_text(&doc.text)
    }
}

/// Keeps matches whose semantic type passes `filter` and builds the term list.
pub fn filter_matches(matches: &[ConceptMatch], filter: &SemanticFilter) -> MedicationList {
    let kept: Vec<ConceptMatch> = matches.iter().filter(|m| filter.allows(&m.sty)).cloned().collect();
    let mut by_norm: BTreeMap<String, String> = BTreeMap::new();
    for m in &kept {
        by_norm.entry(normalize_term(&m.surface)).or_insert_with(|| m.surface.clone());
    }
    MedicationList { terms: by_norm.into_values().collect(), matches: kept }
}
