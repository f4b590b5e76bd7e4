//! Report emission: per-record JSONL, a Table-1-shaped correlation CSV, a
//! JSON summary with provenance, and inter-annotator agreement when double
//! annotations exist.

use super::dataset::DatasetEntry;
use super::pipeline::{count_statuses, PipelineRecord, RecordStatus, RunConfig, StatusCounts};
use super::HarnessError;
use crate::metrics::{cohens_kappa, fc_numeric, pearson_p_value, pearson_r, Correlation, LabelPair};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Row order of the summary table; only rows with any data are emitted.
pub const SUMMARY_METRIC_ORDER: [&str; 8] = [
    "Exact Match",
    "BLEU-1",
    "BLEU-4",
    "ROUGE-L",
    "METEOR",
    "Trust_BC",
    "Trust_FC",
    "Trust_OV",
];

#[derive(Debug, Clone, Serialize)]
pub struct SummaryCell {
    pub r: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub generated_at_unix: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub counts: BTreeMap<String, StatusCounts>,
    /// metric -> model -> correlation cell ("NAN" where uncomputable).
    pub summary: BTreeMap<String, BTreeMap<String, SummaryCell>>,
    /// model -> Cohen's kappa over double annotations (plus "Overall").
    pub kappa: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

/// Value of a named metric for one evaluated record.
fn metric_value(record: &PipelineRecord, metric: &str) -> Option<f64> {
    let trust = record.trust.as_ref()?;
    match metric {
        "Trust_BC" => Some(trust.bc_score as f64),
        "Trust_FC" => trust.fc_verdict.as_ref().map(|v| fc_numeric(v.relation)),
        "Trust_OV" => trust.ov_score,
        name => trust.baseline_scores.get(name).copied(),
    }
}

fn models_in(records: &[PipelineRecord]) -> Vec<String> {
    let mut models: Vec<String> = records.iter().map(|r| r.model_id.clone()).collect();
    models.sort();
    models.dedup();
    models
}

/// Pearson correlation of every metric against human labels, per model.
pub fn correlation_summary(
    records: &[PipelineRecord],
) -> BTreeMap<String, BTreeMap<String, SummaryCell>> {
    let models = models_in(records);
    let mut summary: BTreeMap<String, BTreeMap<String, SummaryCell>> = BTreeMap::new();
    for metric in SUMMARY_METRIC_ORDER {
        let mut row: BTreeMap<String, SummaryCell> = BTreeMap::new();
        let mut any_data = false;
        for model in &models {
            let mut values = Vec::new();
            let mut labels = Vec::new();
            for record in records.iter().filter(|r| &r.model_id == model) {
                if record.status != RecordStatus::Evaluated {
                    continue;
                }
                let Some(trust) = &record.trust else { continue };
                let Some(label) = trust.human_label else { continue };
                let Some(value) = metric_value(record, metric) else {
                    continue;
                };
                values.push(value);
                labels.push(label as f64);
            }
            if !values.is_empty() {
                any_data = true;
            }
            let cell = match pearson_r(&values, &labels) {
                Ok(correlation) => SummaryCell {
                    r: correlation.as_report_string(),
                    p_value: pearson_p_value(&correlation, values.len()),
                    n: values.len(),
                },
                Err(_) => SummaryCell {
                    r: Correlation::Undefined.as_report_string(),
                    p_value: None,
                    n: values.len(),
                },
            };
            row.insert(model.clone(), cell);
        }
        if any_data {
            summary.insert(metric.to_string(), row);
        }
    }
    summary
}

/// Per-model double-annotation pairs, when a second annotator's labels
/// exist in the dataset.
pub fn double_annotation_pairs(entries: &[DatasetEntry]) -> BTreeMap<String, Vec<LabelPair>> {
    let mut pairs: BTreeMap<String, Vec<LabelPair>> = BTreeMap::new();
    for entry in entries {
        for (model, a) in &entry.human_labels {
            if let Some(b) = entry.human_labels_b.get(model) {
                pairs
                    .entry(model.clone())
                    .or_default()
                    .push(LabelPair::new(a.to_string(), b.to_string()));
            }
        }
    }
    pairs
}

fn kappa_table(pairs: &BTreeMap<String, Vec<LabelPair>>) -> BTreeMap<String, f64> {
    let mut table = BTreeMap::new();
    let mut all: Vec<LabelPair> = Vec::new();
    for (model, pairs) in pairs {
        if pairs.is_empty() {
            continue;
        }
        table.insert(model.clone(), cohens_kappa(pairs));
        all.extend(pairs.iter().cloned());
    }
    if !all.is_empty() {
        table.insert("Overall".to_string(), cohens_kappa(&all));
    }
    table
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    std::fs::write(path, body).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Serializes records as JSON lines, sorted and timestamp-free so repeated
/// runs are byte-identical.
pub fn records_to_jsonl(records: &[PipelineRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn summary_to_csv(
    summary: &BTreeMap<String, BTreeMap<String, SummaryCell>>,
    models: &[String],
) -> String {
    let mut out = String::from("metric");
    for model in models {
        out.push(',');
        out.push_str(&csv_field(model));
    }
    out.push('\n');
    for metric in SUMMARY_METRIC_ORDER {
        let Some(row) = summary.get(metric) else {
            continue;
        };
        out.push_str(&csv_field(metric));
        for model in models {
            out.push(',');
            let cell = row.get(model).map(|c| c.r.clone()).unwrap_or_else(|| "NAN".to_string());
            out.push_str(&csv_field(&cell));
        }
        out.push('\n');
    }
    out
}

fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Emits records.jsonl, summary.csv, summary.json, and kappa.csv (when
/// double annotations are present) into `output_dir`.
pub fn correlate_and_report(
    records: &[PipelineRecord],
    entries: &[DatasetEntry],
    cfg: &RunConfig,
    output_dir: &Path,
) -> Result<Report, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config(
            "no records to report on".to_string(),
        ));
    }
    std::fs::create_dir_all(output_dir).map_err(|e| HarnessError::Io {
        path: output_dir.display().to_string(),
        message: e.to_string(),
    })?;

    let summary = correlation_summary(records);
    let counts = count_statuses(records);
    let kappa = kappa_table(&double_annotation_pairs(entries));
    let report = Report {
        counts,
        summary,
        kappa,
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: config_hash(cfg),
            generated_at_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    };

    write_file(&output_dir.join("records.jsonl"), &records_to_jsonl(records))?;
    let models = models_in(records);
    write_file(
        &output_dir.join("summary.csv"),
        &summary_to_csv(&report.summary, &models),
    )?;
    write_file(
        &output_dir.join("summary.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    if !report.kappa.is_empty() {
        let mut csv = String::from("system,cohens_kappa\n");
        for (system, value) in &report.kappa {
            if system != "Overall" {
                csv.push_str(&format!("{},{:.4}\n", csv_field(system), value));
            }
        }
        if let Some(overall) = report.kappa.get("Overall") {
            csv.push_str(&format!("Overall,{overall:.4}\n"));
        }
        write_file(&output_dir.join("kappa.csv"), &csv)?;
    }
    Ok(report)
}
