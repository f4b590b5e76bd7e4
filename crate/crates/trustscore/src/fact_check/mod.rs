//! The fact-checking evaluator: BM25 retrieval of evidence passages,
//! evidence-block construction, and a prompted entailment verdict.

mod bm25;

pub use bm25::{
    bm25_score, build_index, index_tokens, read_corpus_tsv, Bm25Index, Passage, DEFAULT_B,
    DEFAULT_K1, INDEX_FORMAT_VERSION,
};

use crate::domain::{DecodingConfig, EvidencePassage, FcRelation, FcVerdict, Question};
use crate::gateway::{judge_entailment, Backend, GatewayError, PromptTemplate};
use thiserror::Error;

/// Evidence passages retrieved per question.
pub const DEFAULT_TOP_K: usize = 10;

/// Character budget for the concatenated evidence block.
pub const DEFAULT_EVIDENCE_BUDGET: usize = 8000;

#[derive(Debug, Error)]
pub enum FactCheckError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("malformed corpus row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("passage {0} is not in the index")]
    UnknownPassage(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad index manifest: {message}")]
    BadManifest { message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The retrieval query for a question-answer pair, verbatim.
pub fn retrieval_query(question: &Question, answer_text: &str) -> String {
    format!(
        "\"answer {answer_text}\" correctly answers the question of \"question {}\"",
        question.text
    )
}

/// Top-k passages by BM25 for the templated query; ties break by passage
/// id ascending. Passages sharing no term with the query never appear.
pub fn retrieve_evidence(
    question: &Question,
    answer_text: &str,
    index: &Bm25Index,
    k: usize,
) -> Vec<(Passage, f64)> {
    let query = retrieval_query(question, answer_text);
    let terms = index_tokens(&query);
    let mut scored: Vec<(String, f64)> = bm25::score_all(&terms, index).into_iter().collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(id, score)| (index.passage(&id).expect("scored ids are indexed").clone(), score))
        .collect()
}

/// Concatenates ranked passages into one evidence block, dropping whole
/// lowest-ranked passages to stay within the character budget. The top
/// passage always survives.
pub fn build_evidence_block(results: &[(Passage, f64)], budget: usize) -> (String, usize) {
    let mut block = String::new();
    let mut included = 0;
    for (rank, (passage, _)) in results.iter().enumerate() {
        let line = format!("[{}] {}: {}", rank + 1, passage.title, passage.text);
        let extra = line.len() + if block.is_empty() { 0 } else { 1 };
        if included > 0 && block.len() + extra > budget {
            break;
        }
        if !block.is_empty() {
            block.push('\n');
        }
        block.push_str(&line);
        included += 1;
    }
    (block, included)
}

/// Retrieves evidence and issues at most one entailment call. Zero
/// retrieved passages short-circuit to Neutral without touching the
/// backend.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_fc(
    question: &Question,
    answer_text: &str,
    index: &Bm25Index,
    backend: &dyn Backend,
    decoding: &DecodingConfig,
    template: &PromptTemplate,
    k: usize,
    evidence_budget: usize,
) -> Result<FcVerdict, FactCheckError> {
    let results = retrieve_evidence(question, answer_text, index, k);
    let evidence_passages: Vec<EvidencePassage> = results
        .iter()
        .map(|(passage, score)| EvidencePassage {
            passage_id: passage.id.clone(),
            text: passage.text.clone(),
            bm25_score: *score,
        })
        .collect();

    if results.is_empty() {
        return Ok(FcVerdict {
            relation: FcRelation::Neutral,
            evidence_passages,
            raw_judge_output: String::new(),
        });
    }

    let (block, _included) = build_evidence_block(&results, evidence_budget);
    let (relation, raw_judge_output) =
        judge_entailment(question, answer_text, &block, template, backend, decoding)?;
    Ok(FcVerdict {
        relation,
        evidence_passages,
        raw_judge_output,
    })
}
