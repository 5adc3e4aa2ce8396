//! Benchmark harness: loads line-delimited QA datasets, runs the
//! deliberation engine over the items with bounded concurrency, grades the
//! answers, and summarizes accuracy plus calibration.
//!
//! Item failures are soft — a failing item becomes an incorrect record
//! with zero confidence and an error annotation, never an aborted run.

use crate::calibration::{
    compute_accuracy, compute_ece, grade_answer, reliability_bins, CalibrationError, GradingMode,
    ReliabilityBin,
};
use crate::deliberation::{run_deliberation, DeliberationPolicy};
use crate::domain::{Confidence, PredictionRecord};
use crate::events::{BufferSink, EventSink, SectionTaggedSink, TraceEvent};
use crate::prompts::PromptPack;
use crate::providers::ProviderSet;
use crate::util::parallel_map;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    /// Choice letter -> choice text; required in choice-letter mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<BTreeMap<String, String>>,
    pub gold: String,
    pub grading_mode: GradingMode,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl BenchmarkItem {
    fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".to_string());
        }
        if self.question.trim().is_empty() {
            return Err("question is empty".to_string());
        }
        if self.gold.trim().is_empty() {
            return Err("gold is empty".to_string());
        }
        if self.grading_mode == GradingMode::ChoiceLetter {
            let Some(choices) = &self.choices else {
                return Err("choice-letter item has no choices".to_string());
            };
            let gold = self.gold.trim().to_ascii_uppercase();
            if !choices.keys().any(|k| k.trim().to_ascii_uppercase() == gold) {
                return Err(format!("gold '{}' is not a choice letter", self.gold));
            }
        }
        Ok(())
    }

    /// The prompt-facing question text: choice items append their options.
    pub fn prompt_text(&self) -> String {
        match &self.choices {
            None => self.question.clone(),
            Some(choices) => {
                let options = choices
                    .iter()
                    .map(|(letter, text)| format!("{letter}) {text}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                format!("{} Options: {}", self.question, options)
            }
        }
    }
}

/// Run-level metric summary with the configuration echoed for
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub n_bins: usize,
    pub reliability: Vec<ReliabilityBin>,
    pub run_config: RunEcho,
}

/// Echo of the knobs that produced a metrics file. `ece_convention`
/// records that the reported figure is standard binned ECE over [0,1]
/// normalized confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub policy: DeliberationPolicy,
    pub provider: String,
    pub prompt_pack_version: String,
    pub ece_convention: String,
}

impl RunEcho {
    pub fn new(policy: &DeliberationPolicy, provider: &str, prompt_pack_version: &str) -> Self {
        Self {
            policy: policy.clone(),
            provider: provider.to_string(),
            prompt_pack_version: prompt_pack_version.to_string(),
            ece_convention: "standard binned ECE over [0,1]-normalized confidences".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate id '{id}' at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error(transparent)]
    Metrics(#[from] CalibrationError),
}

/// Loads a line-delimited dataset: one JSON item per non-empty line.
/// Every item invariant is checked and duplicate ids are rejected.
pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkItem>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut items: Vec<BenchmarkItem> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        item.check().map_err(|message| DatasetError::Parse {
            line: line_no,
            message,
        })?;
        if items.iter().any(|have| have.id == item.id) {
            return Err(DatasetError::DuplicateId {
                id: item.id,
                line: line_no,
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Runs one deliberation per item with at most `parallelism` concurrent
/// workers and grades the answers. Records come back in input order; trace
/// events are buffered per item and flushed in input order.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    providers: &ProviderSet,
    policy: &DeliberationPolicy,
    parallelism: usize,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Vec<PredictionRecord> {
    let outcomes = parallel_map(
        parallelism,
        items.to_vec(),
        |index, item| -> (PredictionRecord, Vec<TraceEvent>) {
            let buffer = BufferSink::new();
            let tagged = SectionTaggedSink::new(&buffer, index + 1);
            let record = run_one_item(&item, providers, policy, pack, &tagged);
            (record, buffer.drain())
        },
    );

    let mut records = Vec::with_capacity(outcomes.len());
    for (record, events) in outcomes {
        for event in events {
            sink.emit(event);
        }
        records.push(record);
    }
    records
}

fn run_one_item(
    item: &BenchmarkItem,
    providers: &ProviderSet,
    policy: &DeliberationPolicy,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> PredictionRecord {
    let question = item.prompt_text();
    match run_deliberation(&question, providers, policy, pack, sink) {
        Ok(result) => {
            let (correct, grade_error) =
                match grade_answer(&result.answer, &item.gold, item.grading_mode) {
                    Ok(correct) => (correct, None),
                    Err(e) => {
                        sink.emit(TraceEvent::warning(
                            0,
                            format!("grading '{}' counted incorrect: {e}", item.id),
                        ));
                        (false, Some(e.to_string()))
                    }
                };
            PredictionRecord {
                item_id: item.id.clone(),
                answer: result.answer,
                confidence: result.confidence,
                correct,
                error: grade_error,
            }
        }
        Err(e) => {
            sink.emit(TraceEvent::warning(
                0,
                format!("item '{}' failed hard, recorded incorrect: {e}", item.id),
            ));
            PredictionRecord {
                item_id: item.id.clone(),
                answer: String::new(),
                confidence: Confidence::zero(),
                correct: false,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Delegates accuracy / ECE / reliability to the calibration module and
/// attaches the run configuration echo.
pub fn summarize_metrics(
    records: &[PredictionRecord],
    n_bins: usize,
    run_config: RunEcho,
) -> Result<MetricsSummary, DatasetError> {
    let accuracy = compute_accuracy(records)?;
    let ece = compute_ece(records, n_bins)?;
    let reliability = reliability_bins(records, n_bins)?;
    Ok(MetricsSummary {
        n: records.len(),
        accuracy,
        ece,
        n_bins,
        reliability,
        run_config,
    })
}
