//! Core data types shared by every stage of the pipeline.
//!
//! All types here are immutable value objects with no I/O; construction is by
//! literal field assembly and [`validate`] reports invariant violations
//! instead of panicking.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The literal last option of every five-option probe.
///
/// Pinned as a constant so probes stay byte-identical to the exemplar
/// layout, including the missing "the" and the trailing period.
pub const NONE_OF_ABOVE: &str = "None of above.";

/// The six admissible overall-score values.
pub const OV_LATTICE: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// A context-free question, optionally with gold answers for baseline metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dataset: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold_answers: Vec::new(),
            source_dataset: None,
        }
    }
}

/// Decoding strategy for a model backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum DecodingStrategy {
    Greedy,
    Temperature { value: f64 },
}

/// Decoding configuration; the default is greedy with a 1042-token cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    #[serde(flatten)]
    pub strategy: DecodingStrategy,
    pub max_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            strategy: DecodingStrategy::Greedy,
            max_tokens: 1042,
        }
    }
}

impl DecodingConfig {
    /// Greedy is sent to chat backends as temperature 0.
    pub fn effective_temperature(&self) -> f64 {
        match self.strategy {
            DecodingStrategy::Greedy => 0.0,
            DecodingStrategy::Temperature { value } => value,
        }
    }
}

/// A model's long-form answer to one question, frozen before any checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub question_id: String,
    pub model_id: String,
    pub text: String,
    #[serde(default)]
    pub decoding: DecodingConfig,
}

/// Where a substitute candidate came from, in source-priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTier {
    DbpediaTyped,
    EmbeddingSimilar,
    EmbeddingPerWord,
    PosRandom,
}

/// A near-copy of the response with exactly one term span replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub text: String,
    pub replaced_term: String,
    pub substitute: String,
    pub source_tier: SourceTier,
}

/// One behavior-consistency probe: five labeled options with a known
/// correct index. Option E is always [`NONE_OF_ABOVE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChoiceItem {
    pub question_text: String,
    pub options: [String; 5],
    pub correct_index: usize,
    /// 1-based attempt number within a BC run.
    pub attempt_index: usize,
}

impl MultiChoiceItem {
    /// The "A)".."E)" lines exactly as they appear in a rendered probe.
    pub fn options_block(&self) -> String {
        let letters = ["A", "B", "C", "D", "E"];
        self.options
            .iter()
            .zip(letters)
            .map(|(text, letter)| format!("{letter}) {text}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// What the model did on a single BC attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSelection {
    pub attempt_index: usize,
    pub options: [String; 5],
    /// Letter of the original response among the options.
    pub correct_letter: char,
    pub raw_reply: String,
    /// Resolved letter, or None when the reply was unparseable.
    pub parsed_letter: Option<char>,
    pub selected_response: bool,
}

/// Outcome of the behavior-consistency evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcVerdict {
    pub consistent: bool,
    pub attempts_used: usize,
    pub selections: Vec<AttemptSelection>,
}

/// Entailment relation between retrieved evidence and a question-answer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcRelation {
    Support,
    Neutral,
    Contradict,
}

/// An evidence passage as it contributed to a fact-checking verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePassage {
    pub passage_id: String,
    pub text: String,
    pub bm25_score: f64,
}

/// Outcome of the fact-checking evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcVerdict {
    pub relation: FcRelation,
    pub evidence_passages: Vec<EvidencePassage>,
    pub raw_judge_output: String,
}

/// Per-question bundle of scores for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub question_id: String,
    pub model_id: String,
    /// 0 or 1.
    pub bc_score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_verdict: Option<FcVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ov_score: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baseline_scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_label: Option<u8>,
}

fn ov_on_lattice(value: f64) -> bool {
    OV_LATTICE.iter().any(|v| (v - value).abs() < 1e-12)
}

/// Checks every [`TrustRecord`] invariant, returning one description per
/// violation. An empty list means the record is well-formed.
pub fn validate(record: &TrustRecord) -> Vec<String> {
    let mut violations = Vec::new();
    if record.bc_score > 1 {
        violations.push(format!("bc_score {} not in {{0, 1}}", record.bc_score));
    }
    match (&record.fc_verdict, record.ov_score) {
        (Some(_), None) => violations.push("ov missing".to_string()),
        (None, Some(_)) => violations.push("ov present without fc verdict".to_string()),
        _ => {}
    }
    if let Some(ov) = record.ov_score {
        if !ov_on_lattice(ov) {
            violations.push("ov not in score lattice".to_string());
        } else if let Some(fc) = &record.fc_verdict {
            let expected = crate::metrics::combine_trust(record.bc_score, fc.relation);
            if (ov - expected.value()).abs() > 1e-12 {
                violations.push(format!(
                    "ov {} does not equal combine_trust({}, {:?}) = {}",
                    ov,
                    record.bc_score,
                    fc.relation,
                    expected.value()
                ));
            }
        }
    }
    if let Some(fc) = &record.fc_verdict {
        if fc.evidence_passages.len() > 10 {
            violations.push(format!(
                "evidence_passages has {} entries, limit is 10",
                fc.evidence_passages.len()
            ));
        }
        if fc
            .evidence_passages
            .windows(2)
            .any(|w| w[0].bm25_score < w[1].bm25_score)
        {
            violations.push("evidence_passages not sorted by bm25_score descending".to_string());
        }
    }
    if let Some(label) = record.human_label {
        if label > 1 {
            violations.push(format!("human_label {label} not in {{0, 1}}"));
        }
    }
    violations
}
