//! Knowledge-augmented extraction of medication relation pairs from clinical text.
//!
//! The pipeline maps medication concepts from a UMLS slice onto each document,
//! injects them into a few-shot prompt, optionally appends passages retrieved
//! from an embedding index over the thesaurus, sends the prompt to a chat model
//! and scores the returned `(drug, attribute)` tuples against gold annotations.
//!
//! Module map:
//!
//! * [`lexicon`]: RRF stream parsing and the filtered concept lexicon.
//! * [`mapper`]: deterministic dictionary matching and medication filtering.
//! * [`corpus`]: standoff and ADE loaders, canonical corpus format, statistics.
//! * [`prompt`]: template library and prompt rendering.
//! * [`llm`]: chat-completion gateway with caching, retries and a scripted mock.
//! * [`rag`]: chunking, embedding, exact vector index and prompt augmentation.
//! * [`parse`]: recovery parser for tuple-list completions.
//! * [`eval`]: per-document counts, micro and macro aggregation, reports.
//! * [`pipeline`]: end-to-end runs, persisted artifacts and run comparison.

pub mod corpus;
pub mod eval;
pub mod hashing;
pub mod lexicon;
pub mod llm;
pub mod mapper;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod rag;
pub mod text;

pub use corpus::{Corpus, DatasetTag, Document, GoldEntity, GoldRelation, RelationType};
pub use lexicon::{ConceptLexicon, SemanticFilter};
pub use llm::{ChatRequest, ChatResponse, GenerationParams};
pub use mapper::{ConceptMatch, MedicationList};
pub use parse::{ExtractedPair, ParseOutcome};
pub use prompt::{PromptMode, RenderedPrompt};
