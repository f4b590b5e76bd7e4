//! The behavioral-consistency evaluator: up to `max_checks` multiple-choice
//! probes with fresh distractors, early termination on the first attempt
//! where the model does not re-select its own response.

use crate::distractor::{
    all_possible_distractors, assemble_mcq, build_candidate_dict, make_distractors,
    CandidateServices, DistractorError, DEFAULT_N_MIN,
};
use crate::domain::{AttemptSelection, BcVerdict, DecodingConfig, Distractor, Question};
use crate::gateway::{answer_mcq, Backend, GatewayError, OptionLetter, PromptTemplate};
use crate::seed::{attempt_seed, question_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

pub const DEFAULT_MAX_CHECKS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub max_checks: usize,
    pub n_min: usize,
    pub global_seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            max_checks: DEFAULT_MAX_CHECKS,
            n_min: DEFAULT_N_MIN,
            global_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum BcError {
    /// The response has nothing to substitute (or too few possible
    /// distractors to assemble even one probe); the record is not
    /// evaluable rather than scored.
    #[error("{0}")]
    NotEvaluable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Distractor(DistractorError),
}

/// Runs the consistency loop. The candidate dictionary is built once; each
/// attempt draws three distractors fresh with respect to every earlier
/// attempt, assembles a probe with a per-attempt shuffle seed, and stops at
/// the first selection that is not the response.
pub fn evaluate_bc(
    question: &Question,
    response_text: &str,
    backend: &dyn Backend,
    decoding: &DecodingConfig,
    template: &PromptTemplate,
    cfg: &BcConfig,
    services: &CandidateServices,
) -> Result<BcVerdict, BcError> {
    let mut question_rng = ChaCha8Rng::seed_from_u64(question_seed(cfg.global_seed, &question.id));
    let dict = build_candidate_dict(question, response_text, cfg.n_min, services, &mut question_rng)
        .map_err(|err| match err {
            DistractorError::NoSubstitutableTerm => BcError::NotEvaluable(err.to_string()),
            other => BcError::Distractor(other),
        })?;

    let mut used_texts: HashSet<String> = HashSet::new();
    let mut used_combinations: HashSet<BTreeSet<String>> = HashSet::new();
    let mut selections: Vec<AttemptSelection> = Vec::new();
    let mut consistent = true;

    for attempt in 1..=cfg.max_checks.max(1) {
        let distractors = match make_distractors(response_text, &dict, 3, &used_texts) {
            Ok(distractors) => distractors,
            Err(DistractorError::CandidatePoolExhausted { .. }) => {
                // Freshness degrades gracefully: reuse earlier candidates in
                // a 3-combination not shown before.
                let pool = all_possible_distractors(response_text, &dict);
                match pick_fresh_combination(&pool, &used_combinations) {
                    Some(combination) => {
                        log::warn!(
                            "question {}: distractor pool exhausted at attempt {attempt}; \
                             reusing candidates in a new combination",
                            question.id
                        );
                        combination
                    }
                    None => {
                        return Err(BcError::NotEvaluable(format!(
                            "candidate pool exhausted before attempt {attempt}: \
                             only {} distinct distractors exist",
                            pool.len()
                        )))
                    }
                }
            }
            Err(other) => return Err(BcError::Distractor(other)),
        };
        for distractor in &distractors {
            used_texts.insert(distractor.text.clone());
        }
        used_combinations.insert(distractors.iter().map(|d| d.text.clone()).collect());

        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(attempt_seed(cfg.global_seed, &question.id, attempt));
        let item = assemble_mcq(question, response_text, &distractors, attempt, &mut shuffle_rng);
        let (letter, raw_reply) = answer_mcq(&item, template, backend, decoding)?;
        let correct_letter = OptionLetter::from_index(item.correct_index)
            .and_then(OptionLetter::as_char)
            .expect("correct_index is always 0..=3");
        let selected_response = letter.index() == Some(item.correct_index);

        log::debug!(
            "question {} attempt {attempt}: correct={correct_letter} parsed={:?} raw={raw_reply:?}",
            question.id,
            letter
        );
        selections.push(AttemptSelection {
            attempt_index: attempt,
            options: item.options.clone(),
            correct_letter,
            raw_reply,
            parsed_letter: letter.as_char(),
            selected_response,
        });

        if !selected_response {
            consistent = false;
            break;
        }
    }

    Ok(BcVerdict {
        consistent,
        attempts_used: selections.len(),
        selections,
    })
}

/// First 3-combination (in deterministic lexicographic order over the pool)
/// whose text set has not been shown yet.
fn pick_fresh_combination(
    pool: &[Distractor],
    used: &HashSet<BTreeSet<String>>,
) -> Option<Vec<Distractor>> {
    let n = pool.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let texts: BTreeSet<String> = [&pool[i], &pool[j], &pool[k]]
                    .iter()
                    .map(|d| d.text.clone())
                    .collect();
                if texts.len() == 3 && !used.contains(&texts) {
                    return Some(vec![pool[i].clone(), pool[j].clone(), pool[k].clone()]);
                }
            }
        }
    }
    None
}

/// 1 iff the model stayed consistent through the full check budget.
pub fn bc_score(verdict: &BcVerdict) -> u8 {
    verdict.consistent.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedMock;
    use crate::lexical::{EmbeddingStore, NullLinker, Tagger};
    use std::fmt::Write as _;
    use std::io::Write as _;

    const RESPONSE: &str = "The film premiered in 1983.";

    fn question() -> Question {
        Question::new("q-bc", "when did the film premiere?")
    }

    /// Store where "1983"'s neighbors are 1001..=1030 in that cosine order.
    fn year_store() -> EmbeddingStore {
        let mut content = String::from("31 2\n1983 1 0\n");
        for i in 1..=30 {
            writeln!(content, "10{i:02} 1 0.{i:02}").unwrap();
        }
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        crate::lexical::load_embeddings(file.path(), None).unwrap()
    }

    fn agree_rules() -> Vec<(String, String)> {
        ["A", "B", "C", "D"]
            .iter()
            .map(|letter| (format!("{letter}) {RESPONSE}"), letter.to_string()))
            .collect()
    }

    fn run(
        mock: &ScriptedMock,
        store: &EmbeddingStore,
        tagger: &Tagger,
        max_checks: usize,
    ) -> Result<BcVerdict, BcError> {
        let services = CandidateServices {
            tagger,
            linker: &NullLinker,
            sparql: None,
            embeddings: Some(store),
            high_frequency_rank: 5000,
        };
        let cfg = BcConfig {
            max_checks,
            n_min: 30,
            global_seed: 42,
        };
        evaluate_bc(
            &question(),
            RESPONSE,
            mock,
            &DecodingConfig::default(),
            &PromptTemplate::behavior_consistency(),
            &cfg,
            &services,
        )
    }

    #[test]
    fn always_agree_runs_the_full_budget() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let verdict = run(&mock, &store, &tagger, 10).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.attempts_used, 10);
        assert_eq!(mock.call_count(), 10);
        assert_eq!(bc_score(&verdict), 1);
    }

    #[test]
    fn defect_at_attempt_k_stops_after_exactly_k_calls() {
        let tagger = Tagger::new();
        let store = year_store();
        for (defect_attempt, marker) in [(1usize, "1001"), (3, "1007"), (10, "1028")] {
            let mut rules = vec![(marker.to_string(), "E".to_string())];
            rules.extend(agree_rules());
            let mock = ScriptedMock::from_pairs("m", rules).unwrap();
            let verdict = run(&mock, &store, &tagger, 10).unwrap();
            assert!(!verdict.consistent, "attempt {defect_attempt}");
            assert_eq!(verdict.attempts_used, defect_attempt);
            assert_eq!(mock.call_count(), defect_attempt);
            assert_eq!(bc_score(&verdict), 0);
            assert!(!verdict.selections.last().unwrap().selected_response);
        }
    }

    #[test]
    fn unparseable_reply_counts_as_inconsistent() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock =
            ScriptedMock::from_pairs("m", [("film", "no idea what to pick here")]).unwrap();
        let verdict = run(&mock, &store, &tagger, 10).unwrap();
        assert!(!verdict.consistent);
        assert_eq!(verdict.attempts_used, 1);
        assert_eq!(verdict.selections[0].parsed_letter, None);
    }

    #[test]
    fn distractors_are_fresh_across_all_attempts() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let verdict = run(&mock, &store, &tagger, 10).unwrap();
        let mut seen = HashSet::new();
        for selection in &verdict.selections {
            for (index, option) in selection.options.iter().enumerate().take(4) {
                if index != letter_index(selection.correct_letter) {
                    assert!(seen.insert(option.clone()), "distractor {option:?} reused");
                }
            }
        }
        assert_eq!(seen.len(), 30);
    }

    fn letter_index(letter: char) -> usize {
        (letter as u8 - b'A') as usize
    }

    #[test]
    fn verdict_is_deterministic_given_seed() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock_a = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let mock_b = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let a = run(&mock_a, &store, &tagger, 10).unwrap();
        let b = run(&mock_b, &store, &tagger, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn consistency_is_monotone_in_max_checks() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let at_ten = run(&mock, &store, &tagger, 10).unwrap();
        assert!(at_ten.consistent);
        for limit in [1, 3, 5] {
            let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
            let shorter = run(&mock, &store, &tagger, limit).unwrap();
            assert!(shorter.consistent, "limit {limit}");
            // Same seed derivation: the shorter run is a prefix.
            assert_eq!(
                shorter.selections[..],
                at_ten.selections[..limit],
                "limit {limit}"
            );
        }
    }

    #[test]
    fn unsubstitutable_response_is_not_evaluable() {
        let tagger = Tagger::new();
        let store = year_store();
        let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let services = CandidateServices {
            tagger: &tagger,
            linker: &NullLinker,
            sparql: None,
            embeddings: Some(&store),
            high_frequency_rank: 5000,
        };
        let cfg = BcConfig::default();
        let err = evaluate_bc(
            &question(),
            "it is what it is.",
            &mock,
            &DecodingConfig::default(),
            &PromptTemplate::behavior_consistency(),
            &cfg,
            &services,
        )
        .unwrap_err();
        match err {
            BcError::NotEvaluable(message) => {
                assert_eq!(message, "I did not find the token that needs to be replaced.");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(mock.call_count(), 0);
    }

    #[test]
    fn pool_exhaustion_reuses_combinations_gracefully() {
        // Only 4 candidate years exist: attempts need C(4,3)=4 combos.
        let tagger = Tagger::new();
        let mut content = String::from("5 2\n1983 1 0\n");
        for i in 1..=4 {
            writeln!(content, "10{i:02} 1 0.{i:02}").unwrap();
        }
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        let store = crate::lexical::load_embeddings(file.path(), None).unwrap();

        let mock = ScriptedMock::from_pairs("m", agree_rules()).unwrap();
        let verdict = run(&mock, &store, &tagger, 4).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.attempts_used, 4);
        // Every attempt's 3-set is distinct even though texts repeat.
        let combos: HashSet<BTreeSet<String>> = verdict
            .selections
            .iter()
            .map(|s| {
                s.options
                    .iter()
                    .take(4)
                    .enumerate()
                    .filter(|(i, _)| *i != letter_index(s.correct_letter))
                    .map(|(_, o)| o.clone())
                    .collect()
            })
            .collect();
        assert_eq!(combos.len(), 4);
    }
}
