//! Dataset ingestion and the two filtering passes: open-ended question
//! selection and inconclusive-answer rejection.

use super::HarnessError;
use crate::domain::Question;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

/// One dataset row: the question plus any pre-generated answers and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub question: Question,
    /// model id -> pre-generated answer text
    pub answers: BTreeMap<String, String>,
    /// model id -> binary correctness label
    pub human_labels: BTreeMap<String, u8>,
    /// model id -> second annotator's label, when doubly annotated
    pub human_labels_b: BTreeMap<String, u8>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    id: String,
    question: String,
    #[serde(default)]
    gold_answers: Vec<String>,
    #[serde(default)]
    answers: BTreeMap<String, String>,
    #[serde(default)]
    human_labels: BTreeMap<String, u8>,
    #[serde(default)]
    human_labels_b: BTreeMap<String, u8>,
    #[serde(default)]
    source: Option<String>,
}

/// Parses a JSON-lines dataset, rejecting duplicate question ids.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>, HarnessError> {
    let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut seen: HashSet<String> = HashSet::new();
    let mut entries = Vec::new();
    for (index, line) in raw.lines().enumerate() {
        let line_number = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(line).map_err(|e| HarnessError::Parse {
            line: line_number,
            message: e.to_string(),
        })?;
        if !seen.insert(row.id.clone()) {
            return Err(HarnessError::DuplicateId {
                line: line_number,
                id: row.id,
            });
        }
        if row.question.trim().is_empty() {
            return Err(HarnessError::Parse {
                line: line_number,
                message: "question text is empty".to_string(),
            });
        }
        entries.push(DatasetEntry {
            question: Question {
                id: row.id,
                text: row.question,
                gold_answers: row.gold_answers,
                source_dataset: row.source,
            },
            answers: row.answers,
            human_labels: row.human_labels,
            human_labels_b: row.human_labels_b,
        });
    }
    Ok(entries)
}

const YES_NO_STARTERS: [&str; 14] = [
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "has", "have", "will",
    "would", "should",
];

const COMPARATIVE_CUES: [&str; 6] = ["earlier", "later", "more", "less", "better", "worse"];

fn er_comma_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)\b[a-z]+er,").unwrap())
}

/// Rule id for a question that should be dropped, or None to keep it.
pub fn open_ended_drop_rule(question_text: &str) -> Option<&'static str> {
    let lower = question_text.to_lowercase();
    let first = lower
        .split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())
        .unwrap_or_default();
    if YES_NO_STARTERS.contains(&first) {
        return Some("yes-no");
    }
    let has_alternatives = lower.contains(" or ");
    let has_cue = COMPARATIVE_CUES
        .iter()
        .any(|cue| lower.split(|c: char| !c.is_alphanumeric()).any(|t| t == *cue))
        || er_comma_pattern().is_match(&lower);
    if has_alternatives && has_cue {
        return Some("comparison");
    }
    None
}

/// Splits questions into kept open-ended ones and dropped ones with the
/// rule that fired.
pub fn filter_open_ended(
    questions: Vec<Question>,
) -> (Vec<Question>, Vec<(Question, &'static str)>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for question in questions {
        match open_ended_drop_rule(&question.text) {
            Some(rule) => dropped.push((question, rule)),
            None => kept.push(question),
        }
    }
    (kept, dropped)
}

const INCONCLUSIVE_PHRASES: [&str; 3] = [
    "i am not sure",
    "i don't know",
    "the information is not provided",
];

/// True when the response carries no verifiable content: blank, a verbatim
/// repeat of the question, one token repeated three or more times, or a
/// stock hedging phrase.
pub fn filter_inconclusive(response_text: &str, question_text: &str) -> bool {
    let trimmed = response_text.trim();
    if trimmed.is_empty() {
        return true;
    }
    if trimmed == question_text.trim() {
        return true;
    }
    let tokens: Vec<String> = trimmed
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    if tokens.len() >= 3 && tokens.windows(2).all(|w| w[0] == w[1]) {
        return true;
    }
    let normalized = trimmed.to_lowercase().replace('\u{2019}', "'");
    INCONCLUSIVE_PHRASES
        .iter()
        .any(|phrase| normalized.contains(phrase))
}

/// Seeded per-source sampling: keeps up to `per_source` questions from each
/// source dataset tag, in stable order.
pub fn sample_per_source(
    entries: Vec<DatasetEntry>,
    per_source: usize,
    seed: u64,
) -> Vec<DatasetEntry> {
    let mut by_source: BTreeMap<String, Vec<DatasetEntry>> = BTreeMap::new();
    for entry in entries {
        let source = entry
            .question
            .source_dataset
            .clone()
            .unwrap_or_else(|| "(untagged)".to_string());
        by_source.entry(source).or_default().push(entry);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = Vec::new();
    for (_, mut group) in by_source {
        group.shuffle(&mut rng);
        group.truncate(per_source);
        group.sort_by(|a, b| a.question.id.cmp(&b.question.id));
        sampled.extend(group);
    }
    sampled
}
