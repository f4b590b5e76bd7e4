//! Uniform interface to language-model backends, plus prompt templating and
//! output parsing for the three prompt families.

mod http;
mod mock;
mod parse;
mod templates;

pub use http::HttpChatBackend;
pub use mock::{MockCall, MockRule, ScriptedMock};
pub use parse::{parse_choice, parse_relation, OptionLetter};
pub use templates::{
    render_prompt, PromptTemplate, RenderError, TemplateName, BEHAVIOR_CONSISTENCY_PROMPT,
    CLOSED_BOOK_QA_PROMPT, FACT_CHECKING_PROMPT,
};

use crate::domain::{DecodingConfig, FcRelation, MultiChoiceItem, Question};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { message: String, attempts: usize },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("no scripted matcher fired for prompt starting {prompt_head:?}")]
    NoMatcherFired { prompt_head: String },
    #[error("scripted mock fixture is empty")]
    EmptyFixture,
    #[error("cannot load mock fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("operation requires the {expected:?} template, got {actual:?}")]
    TemplateMismatch {
        expected: TemplateName,
        actual: TemplateName,
    },
    #[error("offline mode forbids the http backend {0}")]
    OfflineForbidsHttp(String),
}

impl From<RenderError> for GatewayError {
    fn from(err: RenderError) -> Self {
        match err {
            RenderError::MissingBinding(name) => GatewayError::MissingBinding(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

fn default_max_in_flight() -> usize {
    4
}

/// Declarative backend description; [`build_backend`] turns it into a live
/// [`Backend`]. The two kinds carry their own required fields, so the
/// "HttpChat requires base_url / ScriptedMock requires a fixture path"
/// invariant holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    HttpChat {
        base_url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env_var: Option<String>,
        model_name: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        retry: RetryConfig,
        #[serde(default)]
        decoding: DecodingConfig,
    },
    ScriptedMock {
        fixture_path: PathBuf,
        model_name: String,
        #[serde(default)]
        decoding: DecodingConfig,
    },
}

impl BackendConfig {
    pub fn model_name(&self) -> &str {
        match self {
            BackendConfig::HttpChat { model_name, .. } => model_name,
            BackendConfig::ScriptedMock { model_name, .. } => model_name,
        }
    }

    pub fn decoding(&self) -> &DecodingConfig {
        match self {
            BackendConfig::HttpChat { decoding, .. } => decoding,
            BackendConfig::ScriptedMock { decoding, .. } => decoding,
        }
    }

    pub fn is_http(&self) -> bool {
        matches!(self, BackendConfig::HttpChat { .. })
    }
}

/// A blocking completion backend. Implementations must accept concurrent
/// calls; the http backend bounds them with its `max_in_flight` permit pool.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, GatewayError>;
    fn model_name(&self) -> &str;
}

/// Instantiates a backend from its config. `offline` rejects http backends.
pub fn build_backend(
    config: &BackendConfig,
    offline: bool,
) -> Result<Box<dyn Backend>, GatewayError> {
    match config {
        BackendConfig::HttpChat {
            base_url,
            api_key_env_var,
            model_name,
            max_in_flight,
            retry,
            ..
        } => {
            if offline {
                return Err(GatewayError::OfflineForbidsHttp(model_name.clone()));
            }
            Ok(Box::new(HttpChatBackend::new(
                base_url.clone(),
                model_name.clone(),
                api_key_env_var.as_deref(),
                *max_in_flight,
                retry.clone(),
            )?))
        }
        BackendConfig::ScriptedMock {
            fixture_path,
            model_name,
            ..
        } => Ok(Box::new(ScriptedMock::from_fixture_file(
            model_name.clone(),
            fixture_path,
        )?)),
    }
}

fn require_template(
    template: &PromptTemplate,
    expected: TemplateName,
) -> Result<(), GatewayError> {
    if template.name != expected {
        return Err(GatewayError::TemplateMismatch {
            expected,
            actual: template.name,
        });
    }
    Ok(())
}

/// Closed-book answer generation. The completion's first line, trimmed, is
/// the answer; a blank completion is an error.
pub fn generate_answer(
    question: &Question,
    template: &PromptTemplate,
    backend: &dyn Backend,
    decoding: &DecodingConfig,
) -> Result<String, GatewayError> {
    require_template(template, TemplateName::ClosedBookQa)?;
    let prompt = render_prompt(template, &BTreeMap::from([("Q", question.text.as_str())]))?;
    let completion = backend.complete(&prompt, decoding)?;
    let answer = completion
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    if answer.is_empty() {
        return Err(GatewayError::EmptyCompletion);
    }
    Ok(answer)
}

/// Poses one five-option probe and resolves the completion to a letter.
/// An unparseable completion is not an error; it counts as a non-response
/// selection downstream.
pub fn answer_mcq(
    item: &MultiChoiceItem,
    template: &PromptTemplate,
    backend: &dyn Backend,
    decoding: &DecodingConfig,
) -> Result<(OptionLetter, String), GatewayError> {
    require_template(template, TemplateName::BehaviorConsistency)?;
    let options_block = item.options_block();
    let prompt = render_prompt(
        template,
        &BTreeMap::from([
            ("Q", item.question_text.as_str()),
            ("options", options_block.as_str()),
        ]),
    )?;
    let completion = backend.complete(&prompt, decoding)?;
    let letter = parse_choice(&completion, Some(&item.options));
    Ok((letter, completion))
}

/// Asks the entailment judge whether the evidence supports the answer.
pub fn judge_entailment(
    question: &Question,
    answer_text: &str,
    evidence: &str,
    template: &PromptTemplate,
    backend: &dyn Backend,
    decoding: &DecodingConfig,
) -> Result<(FcRelation, String), GatewayError> {
    require_template(template, TemplateName::FactChecking)?;
    let prompt = render_prompt(
        template,
        &BTreeMap::from([
            ("evidence", evidence),
            ("Q", question.text.as_str()),
            ("answer", answer_text),
        ]),
    )?;
    let completion = backend.complete(&prompt, decoding)?;
    let relation = parse_relation(&completion);
    Ok((relation, completion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NONE_OF_ABOVE;

    fn decoding() -> DecodingConfig {
        DecodingConfig::default()
    }

    #[test]
    fn generate_answer_reproduces_exemplar() {
        let mock = ScriptedMock::from_pairs(
            "m",
            [(
                "what is the tiger's name in life of pi?",
                "Richard Parker is the tiger's name in life of pi.",
            )],
        )
        .unwrap();
        let question = Question::new("q1", "what is the tiger's name in life of pi?");
        let answer = generate_answer(
            &question,
            &PromptTemplate::closed_book_qa(),
            &mock,
            &decoding(),
        )
        .unwrap();
        assert_eq!(answer, "Richard Parker is the tiger's name in life of pi.");
    }

    #[test]
    fn generate_answer_blank_is_empty_completion() {
        let mock = ScriptedMock::from_pairs("m", [("Question", "")]).unwrap();
        let question = Question::new("q1", "anything?");
        let err = generate_answer(
            &question,
            &PromptTemplate::closed_book_qa(),
            &mock,
            &decoding(),
        )
        .unwrap_err();
        assert!(matches!(err, GatewayError::EmptyCompletion));
    }

    #[test]
    fn generate_answer_trims_and_takes_first_line() {
        let mock = ScriptedMock::from_pairs("m", [("Question", " X \nsecond line")]).unwrap();
        let question = Question::new("q1", "anything?");
        let answer = generate_answer(
            &question,
            &PromptTemplate::closed_book_qa(),
            &mock,
            &decoding(),
        )
        .unwrap();
        assert_eq!(answer, "X");
    }

    fn exemplar_item() -> MultiChoiceItem {
        MultiChoiceItem {
            question_text: "who sings i just want to use your love tonight?".into(),
            options: [
                "Latin rock band the Outfield sings i just want to use your love tonight.".into(),
                "English Power pop band the Outfield sings i just want to use your love tonight."
                    .into(),
                "English rock band the Outfield sings i just want to use your love tonight.".into(),
                "English melodic sensibility band the Outfield sings i just want to use your love tonight."
                    .into(),
                NONE_OF_ABOVE.into(),
            ],
            correct_index: 2,
            attempt_index: 1,
        }
    }

    #[test]
    fn answer_mcq_parses_exemplar_reply() {
        let mock = ScriptedMock::from_pairs("m", [("use your love tonight", "C")]).unwrap();
        let (letter, raw) = answer_mcq(
            &exemplar_item(),
            &PromptTemplate::behavior_consistency(),
            &mock,
            &decoding(),
        )
        .unwrap();
        assert_eq!(letter, OptionLetter::C);
        assert_eq!(raw, "C");
        // The rendered probe carries the labeled options after the exemplars.
        let prompt = &mock.calls()[0].prompt;
        assert!(prompt.contains("A) Latin rock band the Outfield"));
        assert!(prompt.ends_with("Answer:"));
    }

    #[test]
    fn answer_mcq_marker_and_freeform_replies() {
        let mock = ScriptedMock::from_pairs("m", [("use your love", "Answer: B")]).unwrap();
        let (letter, _) = answer_mcq(
            &exemplar_item(),
            &PromptTemplate::behavior_consistency(),
            &mock,
            &decoding(),
        )
        .unwrap();
        assert_eq!(letter, OptionLetter::B);

        let mock = ScriptedMock::from_pairs("m", [("use your love", "I believe none of these.")])
            .unwrap();
        let (letter, _) = answer_mcq(
            &exemplar_item(),
            &PromptTemplate::behavior_consistency(),
            &mock,
            &decoding(),
        )
        .unwrap();
        assert_eq!(letter, OptionLetter::Unparseable);
    }

    #[test]
    fn judge_entailment_parses_relations() {
        let question = Question::new("q1", "q?");
        for (reply, expected) in [
            ("support", FcRelation::Support),
            ("Relation: Contradict.", FcRelation::Contradict),
            ("cannot determine", FcRelation::Neutral),
        ] {
            let mock = ScriptedMock::from_pairs("m", [("Evidence:", reply)]).unwrap();
            let (relation, _) = judge_entailment(
                &question,
                "a",
                "some evidence",
                &PromptTemplate::fact_checking(),
                &mock,
                &decoding(),
            )
            .unwrap();
            assert_eq!(relation, expected, "reply {reply:?}");
        }
    }

    #[test]
    fn template_mismatch_is_rejected() {
        let mock = ScriptedMock::from_pairs("m", [("x", "y")]).unwrap();
        let question = Question::new("q1", "q?");
        let err = generate_answer(
            &question,
            &PromptTemplate::fact_checking(),
            &mock,
            &decoding(),
        )
        .unwrap_err();
        assert!(matches!(err, GatewayError::TemplateMismatch { .. }));
    }

    #[test]
    fn backend_config_round_trips_through_serde() {
        let config = BackendConfig::HttpChat {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env_var: Some("KEY_VAR".into()),
            model_name: "gpt-3.5-turbo".into(),
            max_in_flight: 4,
            retry: RetryConfig::default(),
            decoding: DecodingConfig::default(),
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: BackendConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn offline_rejects_http_backends() {
        let config = BackendConfig::HttpChat {
            base_url: "http://localhost:8000".into(),
            api_key_env_var: None,
            model_name: "m".into(),
            max_in_flight: 1,
            retry: RetryConfig::default(),
            decoding: DecodingConfig::default(),
        };
        match build_backend(&config, true) {
            Err(GatewayError::OfflineForbidsHttp(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(_) => panic!("offline http backend should be rejected"),
        }
    }
}
