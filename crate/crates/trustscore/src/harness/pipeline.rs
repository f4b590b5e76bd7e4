//! Pipeline orchestration: configuration, resource construction, and the
//! per-(question, model) evaluation loop.

use super::dataset::{filter_inconclusive, load_dataset, DatasetEntry};
use super::HarnessError;
use crate::distractor::{CandidateServices, DEFAULT_N_MIN};
use crate::domain::{DecodingConfig, Question, TrustRecord};
use crate::fact_check::{
    build_index, evaluate_fc, read_corpus_tsv, Bm25Index, DEFAULT_B, DEFAULT_EVIDENCE_BUDGET,
    DEFAULT_K1, DEFAULT_TOP_K,
};
use crate::gateway::{
    build_backend, generate_answer, Backend, BackendConfig, GatewayError, PromptTemplate,
};
use crate::lexical::{
    load_embeddings, EmbeddingStore, EntityLinker, GazetteerLinker, HttpSparqlClient, NullLinker,
    SparqlClient, SpotlightLinker, Tagger, DEFAULT_HIGH_FREQUENCY_RANK,
    DEFAULT_LINKER_CONFIDENCE,
};
use crate::metrics::{bleu, exact_match, meteor, rouge_l};
use crate::trust_bc::{bc_score, evaluate_bc, BcConfig, BcError, DEFAULT_MAX_CHECKS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

fn default_concurrency() -> usize {
    4
}

fn default_max_checks() -> usize {
    DEFAULT_MAX_CHECKS
}

fn default_n_min() -> usize {
    DEFAULT_N_MIN
}

fn default_k1() -> f64 {
    DEFAULT_K1
}

fn default_b() -> f64 {
    DEFAULT_B
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_evidence_budget() -> usize {
    DEFAULT_EVIDENCE_BUDGET
}

fn default_metrics() -> Vec<String> {
    ["exact_match", "bleu-1", "bleu-4", "rouge-l", "meteor"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_high_frequency_rank() -> usize {
    DEFAULT_HIGH_FREQUENCY_RANK
}

fn default_linker_confidence() -> f64 {
    DEFAULT_LINKER_CONFIDENCE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcSettings {
    #[serde(default = "default_max_checks")]
    pub max_checks: usize,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
}

impl Default for BcSettings {
    fn default() -> Self {
        Self {
            max_checks: default_max_checks(),
            n_min: default_n_min(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcSettings {
    /// Source corpus to index on the fly; mutually exclusive with
    /// `index_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    /// Previously built index directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
    /// Name (in `backends`) of the entailment judge.
    pub judge_backend: String,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_evidence_budget")]
    pub evidence_budget: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LexicalSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gazetteer_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spotlight_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparql_url: Option<String>,
    #[serde(default = "default_linker_confidence")]
    pub linker_confidence: f64,
    #[serde(default = "default_high_frequency_rank")]
    pub high_frequency_rank: usize,
}

/// Full pipeline configuration; the config file maps onto this one-to-one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    /// Backends keyed by model id; the fact-check judge is also named here.
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub bc: BcSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<FcSettings>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Model ids to evaluate; defaults to every dataset answer key that has
    /// a configured backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    #[serde(default)]
    pub lexical: LexicalSettings,
    #[serde(default)]
    pub offline: bool,
}

impl RunConfig {
    /// Pre-flight validation; every failure here is a `ConfigError`.
    pub fn validate(&self, offline: bool) -> Result<(), HarnessError> {
        if self.backends.is_empty() {
            return Err(HarnessError::Config(
                "at least one backend is required".to_string(),
            ));
        }
        if let Some(fc) = &self.fc {
            match (&fc.corpus_path, &fc.index_path) {
                (Some(_), Some(_)) => {
                    return Err(HarnessError::Config(
                        "fc.corpus_path and fc.index_path are mutually exclusive".to_string(),
                    ))
                }
                (None, None) => {
                    return Err(HarnessError::Config(
                        "fc requires corpus_path or index_path".to_string(),
                    ))
                }
                _ => {}
            }
            if !self.backends.contains_key(&fc.judge_backend) {
                return Err(HarnessError::Config(format!(
                    "fc.judge_backend {:?} is not a configured backend",
                    fc.judge_backend
                )));
            }
        }
        if offline {
            for (name, backend) in &self.backends {
                if backend.is_http() {
                    return Err(HarnessError::Config(format!(
                        "offline mode forbids the http backend {name:?}"
                    )));
                }
            }
            if self.lexical.spotlight_url.is_some() || self.lexical.sparql_url.is_some() {
                return Err(HarnessError::Config(
                    "offline mode forbids remote annotator and sparql endpoints".to_string(),
                ));
            }
        }
        if let Some(models) = &self.models {
            for model in models {
                if !self.backends.contains_key(model) {
                    return Err(HarnessError::Config(format!(
                        "model {model:?} has no configured backend"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Why a (question, model) pair did not produce a trust record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordStatus {
    Evaluated,
    Filtered { rule: String },
    NotEvaluable { reason: String },
    Errored { message: String },
}

/// One output row of the pipeline; `trust` is present iff evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub question_id: String,
    pub model_id: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<TrustRecord>,
}

/// Everything the pipeline built once and shares across workers.
pub struct PipelineResources {
    pub tagger: Tagger,
    pub embeddings: Option<EmbeddingStore>,
    pub linker: Box<dyn EntityLinker>,
    pub sparql: Option<Box<dyn SparqlClient>>,
    pub backends: BTreeMap<String, Box<dyn Backend>>,
    pub fc_index: Option<Bm25Index>,
    pub high_frequency_rank: usize,
}

impl PipelineResources {
    pub fn build(cfg: &RunConfig, offline: bool) -> Result<Self, HarnessError> {
        let embeddings = match &cfg.lexical.embeddings_path {
            Some(path) => Some(
                load_embeddings(path, cfg.lexical.embeddings_limit)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
            ),
            None => None,
        };
        let linker: Box<dyn EntityLinker> = if let Some(path) = &cfg.lexical.gazetteer_path {
            Box::new(
                GazetteerLinker::from_path(path)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
            )
        } else if let Some(url) = &cfg.lexical.spotlight_url {
            Box::new(SpotlightLinker::new(url.clone(), cfg.lexical.linker_confidence))
        } else {
            Box::new(NullLinker)
        };
        let sparql: Option<Box<dyn SparqlClient>> = cfg
            .lexical
            .sparql_url
            .as_ref()
            .map(|url| Box::new(HttpSparqlClient::new(url.clone())) as Box<dyn SparqlClient>);

        let mut backends: BTreeMap<String, Box<dyn Backend>> = BTreeMap::new();
        for (name, backend_cfg) in &cfg.backends {
            let backend = build_backend(backend_cfg, offline).map_err(|e| match e {
                GatewayError::OfflineForbidsHttp(_) => HarnessError::Config(e.to_string()),
                other => HarnessError::Config(other.to_string()),
            })?;
            backends.insert(name.clone(), backend);
        }

        let fc_index = match &cfg.fc {
            Some(fc) => Some(match (&fc.corpus_path, &fc.index_path) {
                (Some(corpus), None) => {
                    let passages =
                        read_corpus_tsv(corpus).map_err(|e| HarnessError::Config(e.to_string()))?;
                    build_index(passages, fc.k1, fc.b)
                        .map_err(|e| HarnessError::Config(e.to_string()))?
                }
                (None, Some(dir)) => {
                    Bm25Index::load(dir).map_err(|e| HarnessError::Config(e.to_string()))?
                }
                _ => unreachable!("validated"),
            }),
            None => None,
        };

        Ok(Self {
            tagger: Tagger::new(),
            embeddings,
            linker,
            sparql,
            backends,
            fc_index,
            high_frequency_rank: cfg.lexical.high_frequency_rank,
        })
    }

    fn services(&self) -> CandidateServices<'_> {
        CandidateServices {
            tagger: &self.tagger,
            linker: self.linker.as_ref(),
            sparql: self.sparql.as_deref(),
            embeddings: self.embeddings.as_ref(),
            high_frequency_rank: self.high_frequency_rank,
        }
    }
}

/// Canonical display name for a configured metric id.
pub fn metric_display_name(id: &str) -> Option<&'static str> {
    match id.to_lowercase().replace('_', "-").as_str() {
        "exact-match" | "em" => Some("Exact Match"),
        "bleu-1" | "bleu1" => Some("BLEU-1"),
        "bleu-4" | "bleu4" => Some("BLEU-4"),
        "rouge-l" | "rougel" => Some("ROUGE-L"),
        "meteor" => Some("METEOR"),
        _ => None,
    }
}

fn baseline_scores(
    metric_ids: &[String],
    prediction: &str,
    golds: &[String],
) -> BTreeMap<String, f64> {
    let mut scores = BTreeMap::new();
    if golds.is_empty() {
        return scores;
    }
    for id in metric_ids {
        let Some(name) = metric_display_name(id) else {
            continue;
        };
        let value = match name {
            "Exact Match" => Some(exact_match(prediction, golds) as f64),
            "BLEU-1" => bleu(prediction, golds, 1).ok(),
            "BLEU-4" => bleu(prediction, golds, 4).ok(),
            "ROUGE-L" => golds
                .iter()
                .map(|g| rouge_l(prediction, g))
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v)))),
            "METEOR" => golds
                .iter()
                .map(|g| meteor(prediction, g))
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v)))),
            _ => None,
        };
        if let Some(value) = value {
            scores.insert(name.to_string(), value);
        }
    }
    scores
}

struct Task<'a> {
    entry: &'a DatasetEntry,
    model_id: String,
}

fn evaluate_task(
    task: &Task,
    cfg: &RunConfig,
    resources: &PipelineResources,
) -> PipelineRecord {
    let question = &task.entry.question;
    let model_id = &task.model_id;
    let make = |status: RecordStatus, trust: Option<TrustRecord>| PipelineRecord {
        question_id: question.id.clone(),
        model_id: model_id.clone(),
        status,
        trust,
    };

    let backend = match resources.backends.get(model_id) {
        Some(backend) => backend.as_ref(),
        None => {
            return make(
                RecordStatus::Errored {
                    message: format!("no backend configured for model {model_id:?}"),
                },
                None,
            )
        }
    };
    let decoding = cfg
        .backends
        .get(model_id)
        .map(|b| b.decoding().clone())
        .unwrap_or_default();

    // Obtain the response: pre-generated if present, else closed-book QA.
    let response = match task.entry.answers.get(model_id) {
        Some(text) => text.clone(),
        None => {
            match generate_answer(
                question,
                &PromptTemplate::closed_book_qa(),
                backend,
                &decoding,
            ) {
                Ok(text) => text,
                Err(GatewayError::EmptyCompletion) => String::new(),
                Err(e) => {
                    return make(
                        RecordStatus::Errored {
                            message: format!("answer generation failed: {e}"),
                        },
                        None,
                    )
                }
            }
        }
    };

    if filter_inconclusive(&response, &question.text) {
        return make(
            RecordStatus::Filtered {
                rule: "inconclusive".to_string(),
            },
            None,
        );
    }

    let bc_cfg = BcConfig {
        max_checks: cfg.bc.max_checks,
        n_min: cfg.bc.n_min,
        global_seed: cfg.seed,
    };
    let verdict = match evaluate_bc(
        question,
        &response,
        backend,
        &decoding,
        &PromptTemplate::behavior_consistency(),
        &bc_cfg,
        &resources.services(),
    ) {
        Ok(verdict) => verdict,
        Err(BcError::NotEvaluable(reason)) => {
            return make(RecordStatus::NotEvaluable { reason }, None)
        }
        Err(e) => {
            return make(
                RecordStatus::Errored {
                    message: format!("behavior consistency failed: {e}"),
                },
                None,
            )
        }
    };
    let bc = bc_score(&verdict);

    let (fc_verdict, ov_score) = match (&cfg.fc, &resources.fc_index) {
        (Some(fc), Some(index)) => {
            let judge = match resources.backends.get(&fc.judge_backend) {
                Some(judge) => judge.as_ref(),
                None => {
                    return make(
                        RecordStatus::Errored {
                            message: format!("judge backend {:?} missing", fc.judge_backend),
                        },
                        None,
                    )
                }
            };
            let judge_decoding = cfg
                .backends
                .get(&fc.judge_backend)
                .map(|b| b.decoding().clone())
                .unwrap_or_default();
            match evaluate_fc(
                question,
                &response,
                index,
                judge,
                &judge_decoding,
                &PromptTemplate::fact_checking(),
                fc.top_k,
                fc.evidence_budget,
            ) {
                Ok(verdict) => {
                    let ov = crate::metrics::combine_trust(bc, verdict.relation).value();
                    (Some(verdict), Some(ov))
                }
                Err(e) => {
                    return make(
                        RecordStatus::Errored {
                            message: format!("fact checking failed: {e}"),
                        },
                        None,
                    )
                }
            }
        }
        _ => (None, None),
    };

    let trust = TrustRecord {
        question_id: question.id.clone(),
        model_id: model_id.clone(),
        bc_score: bc,
        fc_verdict,
        ov_score,
        baseline_scores: baseline_scores(&cfg.metrics, &response, &question.gold_answers),
        human_label: task.entry.human_labels.get(model_id).copied(),
    };
    make(RecordStatus::Evaluated, Some(trust))
}

/// Runs the full pipeline over every (question, model) pair with a bounded
/// worker pool. Partial failures become per-record statuses; records come
/// back sorted by (question_id, model_id) regardless of execution order.
pub fn run_pipeline(cfg: &RunConfig, offline: bool) -> Result<Vec<PipelineRecord>, HarnessError> {
    cfg.validate(offline)?;
    let entries = load_dataset(&cfg.dataset_path)?;
    let resources = PipelineResources::build(cfg, offline)?;
    run_pipeline_with(cfg, &entries, &resources)
}

/// Pipeline body over pre-built resources (kept separate so tests can
/// inject stub services).
pub fn run_pipeline_with(
    cfg: &RunConfig,
    entries: &[DatasetEntry],
    resources: &PipelineResources,
) -> Result<Vec<PipelineRecord>, HarnessError> {
    let models: Vec<String> = match &cfg.models {
        Some(models) => models.clone(),
        None => {
            let mut models: Vec<String> = entries
                .iter()
                .flat_map(|e| e.answers.keys().cloned())
                .filter(|m| resources.backends.contains_key(m))
                .collect();
            models.sort();
            models.dedup();
            models
        }
    };

    let mut tasks: Vec<Task> = Vec::new();
    for entry in entries {
        for model in &models {
            tasks.push(Task {
                entry,
                model_id: model.clone(),
            });
        }
    }

    let next_task = AtomicUsize::new(0);
    let records: Mutex<Vec<PipelineRecord>> = Mutex::new(Vec::with_capacity(tasks.len()));
    let workers = cfg.concurrency.max(1).min(tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next_task.fetch_add(1, Ordering::SeqCst);
                if index >= tasks.len() {
                    break;
                }
                let record = evaluate_task(&tasks[index], cfg, resources);
                records.lock().unwrap().push(record);
            });
        }
    });

    let mut records = records.into_inner().unwrap();
    records.sort_by(|a, b| {
        (&a.question_id, &a.model_id).cmp(&(&b.question_id, &b.model_id))
    });
    Ok(records)
}

/// Per-model record counts; conservation means these sum to the number of
/// (question, model) tasks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub evaluated: usize,
    pub filtered: usize,
    pub not_evaluable: usize,
    pub errored: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.evaluated + self.filtered + self.not_evaluable + self.errored
    }
}

pub fn count_statuses(records: &[PipelineRecord]) -> BTreeMap<String, StatusCounts> {
    let mut counts: BTreeMap<String, StatusCounts> = BTreeMap::new();
    for record in records {
        let entry = counts.entry(record.model_id.clone()).or_default();
        match &record.status {
            RecordStatus::Evaluated => entry.evaluated += 1,
            RecordStatus::Filtered { .. } => entry.filtered += 1,
            RecordStatus::NotEvaluable { .. } => entry.not_evaluable += 1,
            RecordStatus::Errored { .. } => entry.errored += 1,
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let toml_text = r#"
dataset_path = "data.jsonl"
seed = 42
output_dir = "out"

[backends.mock]
kind = "scripted_mock"
fixture_path = "mock.json"
model_name = "mock"

[bc]
max_checks = 5

[fc]
corpus_path = "corpus.tsv"
judge_backend = "mock"

[lexical]
embeddings_path = "vectors.txt"
"#;
        let cfg: RunConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.bc.max_checks, 5);
        assert_eq!(cfg.bc.n_min, DEFAULT_N_MIN);
        let fc = cfg.fc.as_ref().unwrap();
        assert_eq!(fc.k1, DEFAULT_K1);
        assert_eq!(fc.judge_backend, "mock");
        assert_eq!(cfg.concurrency, 4);
        cfg.validate(true).unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let base = r#"
dataset_path = "data.jsonl"
seed = 1
output_dir = "out"

[backends.mock]
kind = "scripted_mock"
fixture_path = "mock.json"
model_name = "mock"
"#;
        let mut cfg: RunConfig = toml::from_str(base).unwrap();
        cfg.backends.clear();
        assert!(matches!(cfg.validate(false), Err(HarnessError::Config(_))));

        let mut cfg: RunConfig = toml::from_str(base).unwrap();
        cfg.fc = Some(FcSettings {
            corpus_path: None,
            index_path: None,
            judge_backend: "mock".into(),
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            top_k: DEFAULT_TOP_K,
            evidence_budget: DEFAULT_EVIDENCE_BUDGET,
        });
        assert!(matches!(cfg.validate(false), Err(HarnessError::Config(_))));

        let mut cfg: RunConfig = toml::from_str(base).unwrap();
        cfg.models = Some(vec!["ghost".into()]);
        assert!(matches!(cfg.validate(false), Err(HarnessError::Config(_))));
    }

    #[test]
    fn offline_validation_rejects_http() {
        let toml_text = r#"
dataset_path = "data.jsonl"
seed = 1
output_dir = "out"

[backends.remote]
kind = "http_chat"
base_url = "http://example.com/v1"
model_name = "gpt"
"#;
        let cfg: RunConfig = toml::from_str(toml_text).unwrap();
        assert!(cfg.validate(false).is_ok());
        assert!(matches!(cfg.validate(true), Err(HarnessError::Config(_))));
    }

    #[test]
    fn metric_names_normalize() {
        assert_eq!(metric_display_name("EXACT_MATCH"), Some("Exact Match"));
        assert_eq!(metric_display_name("bleu-1"), Some("BLEU-1"));
        assert_eq!(metric_display_name("ROUGE_L"), Some("ROUGE-L"));
        assert_eq!(metric_display_name("unknown"), None);
    }

    #[test]
    fn baseline_scores_respect_gold_presence() {
        let ids = default_metrics();
        let empty = baseline_scores(&ids, "anything", &[]);
        assert!(empty.is_empty());
        let scores = baseline_scores(&ids, "the cat", &["the cat".to_string()]);
        assert_eq!(scores["Exact Match"], 1.0);
        assert!((scores["BLEU-1"] - 1.0).abs() < 1e-12);
        assert!((scores["ROUGE-L"] - 1.0).abs() < 1e-12);
    }
}
