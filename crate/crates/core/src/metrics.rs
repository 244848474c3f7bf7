//! Per-iteration and per-training-event bookkeeping, and CSV emission.
//!
//! Three files are written per report (schema v1, see `docs/formats.md`):
//!
//! - `<name>.csv`: one row,
//!   `dataset,samples,classes,model_contribution,train_minutes,total_minutes,balancing`
//! - `<name>.iterations.csv`: one row per labelling iteration
//! - `<name>.training.csv`: one row per training event

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 7] = [
    "dataset",
    "samples",
    "classes",
    "model_contribution",
    "train_minutes",
    "total_minutes",
    "balancing",
];

pub const ITERATION_COLUMNS: [&str; 6] = [
    "iteration",
    "kind",
    "batch_len",
    "correct_by_model",
    "corrected_by_user",
    "contribution_percent",
];

pub const TRAINING_COLUMNS: [&str; 4] = ["event_index", "trigger", "duration_seconds", "classes_trained"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    /// Every label came from the user.
    Bootstrap,
    BulkEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub kind: IterationKind,
    pub batch_len: usize,
    pub correct_by_model: usize,
    pub corrected_by_user: usize,
}

impl IterationRecord {
    pub fn contribution_percent(&self) -> f64 {
        if self.batch_len == 0 {
            0.0
        } else {
            100.0 * self.correct_by_model as f64 / self.batch_len as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingTrigger {
    Bootstrap,
    BufferFull,
    ReBootstrap,
}

impl TrainingTrigger {
    fn as_str(self) -> &'static str {
        match self {
            TrainingTrigger::Bootstrap => "bootstrap",
            TrainingTrigger::BufferFull => "buffer_full",
            TrainingTrigger::ReBootstrap => "re_bootstrap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub event_index: u64,
    pub trigger: TrainingTrigger,
    pub duration_seconds: f64,
    pub classes_trained: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset_name: String,
    pub sample_count: usize,
    pub class_count: usize,
    pub model_contribution_percent: f64,
    pub training_minutes: f64,
    pub total_minutes: f64,
    pub balancing: bool,
    pub iteration_series: Vec<IterationRecord>,
    pub training_series: Vec<TrainingRecord>,
    pub finalized: bool,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub iterations: PathBuf,
    pub training: PathBuf,
}

impl ReportFiles {
    pub fn for_path(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".into());
        let companion = |suffix: &str| path.with_file_name(format!("{stem}.{suffix}.csv"));
        Self {
            report: path.to_path_buf(),
            iterations: companion("iterations"),
            training: companion("training"),
        }
    }
}

impl Report {
    pub fn new(dataset_name: impl Into<String>, sample_count: usize, balancing: bool) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            sample_count,
            class_count: 0,
            model_contribution_percent: 0.0,
            training_minutes: 0.0,
            total_minutes: 0.0,
            balancing,
            iteration_series: Vec::new(),
            training_series: Vec::new(),
            finalized: false,
        }
    }

    pub fn record_iteration(
        &mut self,
        batch_len: usize,
        corrections: usize,
        kind: IterationKind,
    ) -> Result<&IterationRecord> {
        if corrections > batch_len {
            return Err(Error::Argument(format!(
                "{corrections} corrections in a batch of {batch_len}"
            )));
        }
        self.iteration_series.push(IterationRecord {
            iteration: self.iteration_series.len() as u64 + 1,
            kind,
            batch_len,
            correct_by_model: batch_len - corrections,
            corrected_by_user: corrections,
        });
        self.finalized = false;
        Ok(self.iteration_series.last().expect("just pushed"))
    }

    pub fn record_training(
        &mut self,
        trigger: TrainingTrigger,
        duration_seconds: f64,
        classes_trained: BTreeSet<String>,
    ) -> &TrainingRecord {
        self.training_series.push(TrainingRecord {
            event_index: self.training_series.len() as u64 + 1,
            trigger,
            duration_seconds: duration_seconds.max(0.0),
            classes_trained,
        });
        self.finalized = false;
        self.training_series.last().expect("just pushed")
    }

    /// `100 * sum(correct_by_model) / sum(batch_len)`; 0 when nothing was labelled.
    pub fn running_contribution_percent(&self) -> f64 {
        let (model, total) = self
            .iteration_series
            .iter()
            .fold((0usize, 0usize), |(m, t), r| (m + r.correct_by_model, t + r.batch_len));
        if total == 0 {
            0.0
        } else {
            100.0 * model as f64 / total as f64
        }
    }

    pub fn training_seconds(&self) -> f64 {
        self.training_series.iter().map(|r| r.duration_seconds).sum()
    }

    /// Refreshes the aggregate fields from the series without finalizing.
    pub fn refresh(&mut self) {
        self.model_contribution_percent = self.running_contribution_percent();
        self.training_minutes = self.training_seconds() / 60.0;
        self.total_minutes = self.total_minutes.max(self.training_minutes);
    }

    pub fn finalize(mut self) -> Result<Self> {
        if self.iteration_series.is_empty() {
            return Err(Error::Validation("cannot finalize a report with no iterations".into()));
        }
        self.refresh();
        self.finalized = true;
        Ok(self)
    }

    /// Non-bootstrap iterations, in order.
    pub fn bulk_edit_iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.iteration_series
            .iter()
            .filter(|r| r.kind == IterationKind::BulkEdit)
    }
}

fn two_decimals(value: f64) -> String {
    format!("{value:.2}")
}

fn to_csv<F>(header: &[&str], rows: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(header)?;
    rows(&mut writer)?;
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn report_csv(report: &Report) -> Result<Vec<u8>> {
    to_csv(&REPORT_COLUMNS, |w| {
        w.write_record([
            report.dataset_name.clone(),
            report.sample_count.to_string(),
            report.class_count.to_string(),
            two_decimals(report.model_contribution_percent),
            two_decimals(report.training_minutes),
            two_decimals(report.total_minutes),
            if report.balancing { "on" } else { "off" }.to_string(),
        ])?;
        Ok(())
    })
}

pub fn iterations_csv(report: &Report) -> Result<Vec<u8>> {
    to_csv(&ITERATION_COLUMNS, |w| {
        for r in &report.iteration_series {
            let kind = match r.kind {
                IterationKind::Bootstrap => "bootstrap",
                IterationKind::BulkEdit => "bulk_edit",
            };
            w.write_record([
                r.iteration.to_string(),
                kind.to_string(),
                r.batch_len.to_string(),
                r.correct_by_model.to_string(),
                r.corrected_by_user.to_string(),
                two_decimals(r.contribution_percent()),
            ])?;
        }
        Ok(())
    })
}

pub fn training_csv(report: &Report) -> Result<Vec<u8>> {
    to_csv(&TRAINING_COLUMNS, |w| {
        for r in &report.training_series {
            let classes: Vec<&str> = r.classes_trained.iter().map(String::as_str).collect();
            w.write_record([
                r.event_index.to_string(),
                r.trigger.as_str().to_string(),
                format!("{:.6}", r.duration_seconds),
                classes.join(";"),
            ])?;
        }
        Ok(())
    })
}

/// Writes the report CSV at `path` plus its two companion series files.
pub fn emit_report(report: &Report, path: impl AsRef<Path>) -> Result<ReportFiles> {
    if !report.finalized {
        return Err(Error::Validation("report must be finalized before emitting".into()));
    }
    let files = ReportFiles::for_path(path.as_ref());
    fs::write(&files.report, report_csv(report)?)?;
    fs::write(&files.iterations, iterations_csv(report)?)?;
    fs::write(&files.training, training_csv(report)?)?;
    Ok(files)
}
