//! Priority-based substitution: partition the response's terms into
//! priority levels, fill the candidate dictionary from tiered sources,
//! build single-substitution distractors, and assemble five-option probes.
//!
//! Which term gets replaced follows the informativeness ranking (entities
//! over nouns/numbers over verbs/adjectives over the rest, response-only
//! terms first); where substitutes come from follows the source ranking
//! (typed knowledge-base entities, then embedding neighbors, then
//! POS-matched random words).

use crate::domain::{Distractor, MultiChoiceItem, Question, SourceTier, NONE_OF_ABOVE};
use crate::lexical::{
    find_candidates_by_embedding, find_candidates_by_pos, find_dbpedia_ents, is_high_frequency,
    tag_family, Candidate, EmbeddingStore, EntityLinker, LexicalError, LinkedEntity, SparqlClient,
    TagFamily, Tagger, Token,
};
use indexmap::IndexMap;
use rand::Rng;
use std::collections::HashSet;
use thiserror::Error;

/// Default candidate minimum: the consistency loop needs at most
/// 10 attempts x 3 fresh distractors.
pub const DEFAULT_N_MIN: usize = 30;

#[derive(Debug, Error)]
pub enum DistractorError {
    /// No term in the response is substitutable at any priority level.
    #[error("I did not find the token that needs to be replaced.")]
    NoSubstitutableTerm,
    #[error("candidate pool exhausted: needed {needed} fresh distractors, produced {produced}")]
    CandidatePoolExhausted { needed: usize, produced: usize },
    #[error(transparent)]
    Lexical(#[from] LexicalError),
}

/// External resources the candidate cascade draws from. Absent services
/// simply contribute no candidates at their stage.
pub struct CandidateServices<'a> {
    pub tagger: &'a Tagger,
    pub linker: &'a dyn EntityLinker,
    pub sparql: Option<&'a dyn SparqlClient>,
    pub embeddings: Option<&'a EmbeddingStore>,
    pub high_frequency_rank: usize,
}

/// The response's substitutable terms split by informativeness. Suffix 1
/// means the term appears only in the response, suffix 2 also in the
/// question; the lists are pairwise disjoint by span.
#[derive(Debug, Default)]
pub struct PriorityPartition {
    pub ents1: Vec<LinkedEntity>,
    pub nncds1: Vec<Token>,
    pub vbjjs1: Vec<Token>,
    pub ents2: Vec<LinkedEntity>,
    pub nncds2: Vec<Token>,
    pub others: Vec<Token>,
}

impl PriorityPartition {
    pub fn level3_is_empty(&self) -> bool {
        self.vbjjs1.is_empty() && self.ents2.is_empty() && self.nncds2.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.ents1.is_empty()
            && self.nncds1.is_empty()
            && self.level3_is_empty()
            && self.others.is_empty()
    }
}

/// Ordered term-to-candidates map. Keys keep insertion (priority) order;
/// appends deduplicate by text so earlier tiers win, and empty-valued keys
/// are dropped the way the substitution algorithm repeatedly does.
#[derive(Debug, Default)]
pub struct CandidateDict {
    entries: IndexMap<String, Vec<Candidate>>,
}

impl CandidateDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, term: &str, candidates: Vec<Candidate>) {
        if candidates.is_empty() {
            return;
        }
        let list = self.entries.entry(term.to_string()).or_default();
        for candidate in candidates {
            let duplicate = list
                .iter()
                .any(|c| c.text.eq_ignore_ascii_case(&candidate.text));
            if !duplicate {
                list.push(candidate);
            }
        }
    }

    pub fn total_candidates(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn get(&self, term: &str) -> Option<&[Candidate]> {
        self.entries.get(term).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<Candidate>)> {
        self.entries.iter()
    }

    /// Key-wise concatenation preserving both key orders (left first).
    pub fn merge(&mut self, other: CandidateDict) {
        for (term, candidates) in other.entries {
            self.append(&term, candidates);
        }
    }
}

fn contiguous_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Splits the response into the six priority lists. A term counts as "also
/// in question" iff its lowercase surface occurs in the question's
/// lowercase token sequence (entities by full surface). Stopwords and
/// punctuation are never substitution targets.
pub fn partition_terms(
    question: &Question,
    response_text: &str,
    tagger: &Tagger,
    linker: &dyn EntityLinker,
) -> Result<PriorityPartition, LexicalError> {
    let question_tokens: Vec<String> = tagger
        .tokenize_and_tag(&question.text)
        .iter()
        .map(|t| t.surface.to_lowercase())
        .collect();
    let question_set: HashSet<&String> = question_tokens.iter().collect();

    let mut partition = PriorityPartition::default();

    let entities = linker.link(response_text)?;
    for entity in &entities {
        let entity_tokens: Vec<String> = entity
            .surface
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect();
        if contiguous_subsequence(&question_tokens, &entity_tokens) {
            partition.ents2.push(entity.clone());
        } else {
            partition.ents1.push(entity.clone());
        }
    }

    let covered =
        |span: (usize, usize)| entities.iter().any(|e| span.0 >= e.char_span.0 && span.1 <= e.char_span.1);

    for token in tagger.tokenize_and_tag(response_text) {
        if token.is_punctuation() || token.is_stopword || covered(token.char_span) {
            continue;
        }
        let lowered = token.surface.to_lowercase();
        let in_question = question_set.contains(&lowered);
        match tag_family(&token.pos) {
            TagFamily::Noun | TagFamily::Number => {
                if in_question {
                    partition.nncds2.push(token);
                } else {
                    partition.nncds1.push(token);
                }
            }
            TagFamily::Verb | TagFamily::Adjective => {
                if in_question {
                    partition.others.push(token);
                } else {
                    partition.vbjjs1.push(token);
                }
            }
            _ => partition.others.push(token),
        }
    }
    Ok(partition)
}

fn dedup_surfaces<'a>(surfaces: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for surface in surfaces {
        if seen.insert(surface.to_lowercase()) {
            out.push(surface.to_string());
        }
    }
    out
}

/// The four-stage candidate cascade for entities: typed knowledge-base
/// search, whole-surface embedding neighbors, per-word variants of
/// multi-word entities, and POS-matched random words. Later stages only
/// fire while the dictionary still holds fewer than `num` candidates.
pub fn find_candidates_for_entities<R: Rng>(
    entities: &[LinkedEntity],
    num: usize,
    services: &CandidateServices,
    rng: &mut R,
) -> Result<CandidateDict, DistractorError> {
    let mut dict = CandidateDict::new();

    if let Some(sparql) = services.sparql {
        for entity in entities {
            if !entity.dbpedia_types.is_empty() {
                dict.append(&entity.surface, find_dbpedia_ents(entity, num, sparql, rng)?);
            }
        }
    }

    if dict.total_candidates() < num {
        if let Some(store) = services.embeddings {
            for entity in entities {
                dict.append(
                    &entity.surface,
                    find_candidates_by_embedding(&entity.surface, num, store),
                );
            }
        }
    }

    if dict.total_candidates() < num {
        if let Some(store) = services.embeddings {
            for entity in entities {
                let words: Vec<&str> = entity.surface.split_whitespace().collect();
                if words.len() < 2 {
                    continue;
                }
                // Replace the (leftmost) non-high-frequency word with its
                // embedding neighbors to form whole-entity variants.
                let Some(position) = words
                    .iter()
                    .position(|w| !is_high_frequency(w, store, services.high_frequency_rank))
                else {
                    continue;
                };
                let mut variants = Vec::new();
                for neighbor in find_candidates_by_embedding(words[position], num, store) {
                    let mut rebuilt: Vec<&str> = words.clone();
                    rebuilt[position] = &neighbor.text;
                    let variant = rebuilt.join(" ");
                    if !variant.eq_ignore_ascii_case(&entity.surface) {
                        variants.push(Candidate {
                            text: variant,
                            source_tier: SourceTier::EmbeddingPerWord,
                            score: None,
                        });
                    }
                }
                dict.append(&entity.surface, variants);
            }
        }
    }

    if dict.total_candidates() < num {
        if let Some(store) = services.embeddings {
            for entity in entities {
                dict.append(
                    &entity.surface,
                    find_candidates_by_pos(&entity.surface, num, store, services.tagger, rng),
                );
            }
        }
    }

    Ok(dict)
}

/// The two-stage cascade for plain words: embedding neighbors, then
/// POS-matched random words while under `num`.
pub fn find_candidates_for_words<R: Rng>(
    words: &[String],
    num: usize,
    services: &CandidateServices,
    rng: &mut R,
) -> Result<CandidateDict, DistractorError> {
    let mut dict = CandidateDict::new();
    let Some(store) = services.embeddings else {
        return Ok(dict);
    };
    for word in words {
        dict.append(word, find_candidates_by_embedding(word, num, store));
    }
    if dict.total_candidates() < num {
        for word in words {
            dict.append(
                word,
                find_candidates_by_pos(word, num, store, services.tagger, rng),
            );
        }
    }
    Ok(dict)
}

/// Fills the dictionary from the highest non-empty priority level only.
/// Within level 3 the fill order is verbs/adjectives, then question-shared
/// entities, then question-shared nouns/numbers, each stage gated on the
/// candidate count still being under `n_min`.
pub fn build_candidate_dict<R: Rng>(
    question: &Question,
    response_text: &str,
    n_min: usize,
    services: &CandidateServices,
    rng: &mut R,
) -> Result<CandidateDict, DistractorError> {
    let partition = partition_terms(question, response_text, services.tagger, services.linker)?;

    if !partition.ents1.is_empty() {
        return find_candidates_for_entities(&partition.ents1, n_min, services, rng);
    }
    if !partition.nncds1.is_empty() {
        let words = dedup_surfaces(partition.nncds1.iter().map(|t| t.surface.as_str()));
        return find_candidates_for_words(&words, n_min, services, rng);
    }
    if !partition.level3_is_empty() {
        let mut dict = CandidateDict::new();
        if !partition.vbjjs1.is_empty() {
            let words = dedup_surfaces(partition.vbjjs1.iter().map(|t| t.surface.as_str()));
            dict = find_candidates_for_words(&words, n_min, services, rng)?;
        }
        if dict.total_candidates() < n_min && !partition.ents2.is_empty() {
            dict.merge(find_candidates_for_entities(
                &partition.ents2,
                n_min,
                services,
                rng,
            )?);
        }
        if dict.total_candidates() < n_min && !partition.nncds2.is_empty() {
            let words = dedup_surfaces(partition.nncds2.iter().map(|t| t.surface.as_str()));
            dict.merge(find_candidates_for_words(&words, n_min, services, rng)?);
        }
        return Ok(dict);
    }
    if !partition.others.is_empty() {
        let words = dedup_surfaces(partition.others.iter().map(|t| t.surface.as_str()));
        return find_candidates_for_words(&words, n_min, services, rng);
    }
    Err(DistractorError::NoSubstitutableTerm)
}

/// Byte range of the first occurrence of `term` in `text`.
fn first_occurrence(text: &str, term: &str) -> Option<(usize, usize)> {
    if let Some(start) = text.find(term) {
        return Some((start, start + term.len()));
    }
    // Surfaces come from the text itself, so this fallback only covers
    // case drift introduced by callers.
    let lower_text = text.to_lowercase();
    let lower_term = term.to_lowercase();
    lower_text
        .find(&lower_term)
        .map(|start| (start, start + term.len()))
}

fn begins_sentence(text: &str, start: usize) -> bool {
    text[..start]
        .chars()
        .rev()
        .find(|c| !c.is_whitespace())
        .is_none_or(|c| matches!(c, '.' | '!' | '?'))
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Builds one distractor text by substituting `term`'s first occurrence.
fn substitute(response_text: &str, term: &str, candidate: &str) -> Option<(String, String)> {
    let (start, end) = first_occurrence(response_text, term)?;
    let mut inserted = candidate.to_string();
    if begins_sentence(response_text, start) {
        inserted = capitalize(&inserted);
    }
    let mut text = String::with_capacity(response_text.len());
    text.push_str(&response_text[..start]);
    text.push_str(&inserted);
    text.push_str(&response_text[end..]);
    Some((text, inserted))
}

/// Produces `count` fresh single-substitution distractors, consuming
/// candidates in dictionary order, keys round-robin in priority order.
/// Outputs are pairwise distinct, differ from the response, and avoid the
/// exclude set.
pub fn make_distractors(
    response_text: &str,
    dict: &CandidateDict,
    count: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<Distractor>, DistractorError> {
    let keys: Vec<&String> = dict.keys().collect();
    let mut cursors = vec![0usize; keys.len()];
    let mut produced: Vec<Distractor> = Vec::with_capacity(count);
    let mut produced_texts: HashSet<String> = HashSet::new();

    while produced.len() < count {
        let mut advanced = false;
        for (key_index, term) in keys.iter().enumerate() {
            if produced.len() >= count {
                break;
            }
            let candidates = dict.get(term).unwrap_or_default();
            while cursors[key_index] < candidates.len() {
                let candidate = &candidates[cursors[key_index]];
                cursors[key_index] += 1;
                advanced = true;

                if candidate.text.eq_ignore_ascii_case(term) {
                    continue;
                }
                let Some((text, inserted)) = substitute(response_text, term, &candidate.text)
                else {
                    continue;
                };
                if text == response_text
                    || exclude.contains(&text)
                    || produced_texts.contains(&text)
                {
                    continue;
                }
                produced_texts.insert(text.clone());
                produced.push(Distractor {
                    text,
                    replaced_term: term.to_string(),
                    substitute: inserted,
                    source_tier: candidate.source_tier,
                });
                break;
            }
        }
        if !advanced {
            return Err(DistractorError::CandidatePoolExhausted {
                needed: count,
                produced: produced.len(),
            });
        }
    }
    Ok(produced)
}

/// All distinct distractor texts the dictionary can produce, in consumption
/// order; used for graceful degradation when the fresh pool runs dry.
pub fn all_possible_distractors(response_text: &str, dict: &CandidateDict) -> Vec<Distractor> {
    let total = dict.total_candidates();
    make_distractors(response_text, dict, total, &HashSet::new())
        .or_else(|err| match err {
            DistractorError::CandidatePoolExhausted { .. } => {
                // Take whatever the dictionary yields.
                let mut partial = Vec::new();
                let mut excluded = HashSet::new();
                while let Ok(mut next) = make_distractors(response_text, dict, 1, &excluded) {
                    let distractor = next.pop().unwrap();
                    excluded.insert(distractor.text.clone());
                    partial.push(distractor);
                }
                Ok::<_, DistractorError>(partial)
            }
            other => Err(other),
        })
        .unwrap_or_default()
}

/// Assembles a five-option probe: the response and three distractors are
/// shuffled uniformly over positions A-D, and option E is always the
/// literal refusal option.
pub fn assemble_mcq<R: Rng>(
    question: &Question,
    response_text: &str,
    distractors: &[Distractor],
    attempt_index: usize,
    rng: &mut R,
) -> MultiChoiceItem {
    assert_eq!(distractors.len(), 3, "a probe takes exactly 3 distractors");
    let mut texts: Vec<&str> = Vec::with_capacity(4);
    texts.push(response_text);
    for distractor in distractors {
        assert_ne!(distractor.text, response_text);
        texts.push(&distractor.text);
    }
    for i in (1..texts.len()).rev() {
        let j = rng.gen_range(0..=i);
        texts.swap(i, j);
    }
    let correct_index = texts
        .iter()
        .position(|&t| t == response_text)
        .expect("response is always among the options");
    let options = [
        texts[0].to_string(),
        texts[1].to_string(),
        texts[2].to_string(),
        texts[3].to_string(),
        NONE_OF_ABOVE.to_string(),
    ];
    MultiChoiceItem {
        question_text: question.text.clone(),
        options,
        correct_index,
        attempt_index,
    }
}
