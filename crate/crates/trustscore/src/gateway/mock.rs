//! Deterministic scripted backend for offline runs and tests.

use super::{Backend, GatewayError};
use crate::domain::DecodingConfig;
use serde::Deserialize;
use std::path::Path;
use std::sync::{Arc, Mutex};

/// One fixture entry: the first rule whose `matcher` occurs as a substring
/// of the rendered prompt supplies the reply.
#[derive(Debug, Clone, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: String,
    pub reply: String,
}

/// A completed mock call, kept in arrival order.
#[derive(Debug, Clone)]
pub struct MockCall {
    pub prompt: String,
    pub reply: Option<String>,
}

/// Scripted backend: ordered substring matchers over the rendered prompt,
/// with a full call log. Fully deterministic.
#[derive(Debug)]
pub struct ScriptedMock {
    model_name: String,
    rules: Vec<MockRule>,
    log: Arc<Mutex<Vec<MockCall>>>,
}

impl ScriptedMock {
    pub fn new(model_name: impl Into<String>, rules: Vec<MockRule>) -> Result<Self, GatewayError> {
        if rules.is_empty() {
            return Err(GatewayError::EmptyFixture);
        }
        Ok(Self {
            model_name: model_name.into(),
            rules,
            log: Arc::new(Mutex::new(Vec::new())),
        })
    }

    /// Convenience constructor from (matcher, reply) pairs.
    pub fn from_pairs<M, R>(
        model_name: impl Into<String>,
        pairs: impl IntoIterator<Item = (M, R)>,
    ) -> Result<Self, GatewayError>
    where
        M: Into<String>,
        R: Into<String>,
    {
        let rules = pairs
            .into_iter()
            .map(|(matcher, reply)| MockRule {
                matcher: matcher.into(),
                reply: reply.into(),
            })
            .collect();
        Self::new(model_name, rules)
    }

    /// Loads a JSON fixture file: a list of `{"match": ..., "reply": ...}`.
    pub fn from_fixture_file(
        model_name: impl Into<String>,
        path: &Path,
    ) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rules: Vec<MockRule> =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Fixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Self::new(model_name, rules)
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Backend for ScriptedMock {
    fn complete(&self, prompt: &str, _decoding: &DecodingConfig) -> Result<String, GatewayError> {
        let hit = self
            .rules
            .iter()
            .find(|rule| prompt.contains(&rule.matcher))
            .map(|rule| rule.reply.clone());
        self.log.lock().unwrap().push(MockCall {
            prompt: prompt.to_string(),
            reply: hit.clone(),
        });
        hit.ok_or_else(|| GatewayError::NoMatcherFired {
            prompt_head: prompt.chars().take(120).collect(),
        })
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}
