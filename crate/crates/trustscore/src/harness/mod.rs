//! Dataset ingestion and filtering, pipeline orchestration, and report
//! emission.

mod dataset;
mod pipeline;
mod report;

pub use dataset::{
    filter_inconclusive, filter_open_ended, load_dataset, open_ended_drop_rule, sample_per_source,
    DatasetEntry,
};
pub use pipeline::{
    count_statuses, metric_display_name, run_pipeline, run_pipeline_with, BcSettings, FcSettings,
    LexicalSettings, PipelineRecord, PipelineResources, RecordStatus, RunConfig, StatusCounts,
};
pub use report::{
    correlate_and_report, correlation_summary, double_annotation_pairs, records_to_jsonl,
    summary_to_csv, Provenance, Report, SummaryCell, SUMMARY_METRIC_ORDER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Pre-flight configuration problem; the CLI exits 2 on these.
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate question id {id:?} at line {line}")]
    DuplicateId { line: usize, id: String },
    /// Filesystem failure; the CLI exits 3 on these.
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => 3,
            _ => 2,
        }
    }
}
