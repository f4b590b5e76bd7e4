//! Text-analysis primitives consumed by distractor generation: tokenization
//! with part-of-speech tags, a word-embedding store, and clients for entity
//! linking and typed-entity search.

mod embeddings;
mod linking;
mod sparql;
mod tagger;

pub use embeddings::{
    find_candidates_by_embedding, find_candidates_by_pos, is_high_frequency, load_embeddings,
    sample_without_replacement, EmbeddingStore,
};
pub use linking::{EntityLinker, GazetteerLinker, LinkedEntity, NullLinker, SpotlightLinker};
pub use sparql::{
    find_dbpedia_ents, HttpSparqlClient, SparqlClient, StubSparqlClient, SPARQL_RESULT_CAP,
};
pub use tagger::{is_stopword, tag_family, tokenize_and_tag, TagFamily, Tagger, Token};

use crate::domain::SourceTier;
use thiserror::Error;

/// Frequency-rank threshold below which a word counts as high-frequency.
pub const DEFAULT_HIGH_FREQUENCY_RANK: usize = 5000;

/// Default confidence passed to the remote entity annotator.
pub const DEFAULT_LINKER_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LexicalError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed embedding header in {path}: {message}")]
    MalformedHeader { path: String, message: String },
    #[error("dimension mismatch at line {line}: expected {expected}, got {actual} ({message})")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        actual: usize,
        message: String,
    },
    #[error("malformed gazetteer line {line}: {message}")]
    MalformedGazetteer { line: usize, message: String },
    #[error("transport failure: {message}")]
    Transport { message: String },
}

/// A substitute candidate for one term, scored only when it came from
/// embedding similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    pub source_tier: SourceTier,
    pub score: Option<f64>,
}
