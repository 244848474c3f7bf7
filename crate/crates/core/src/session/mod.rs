//! The labelling loop: bootstrap, per-class model spawning, bulk-edit
//! prediction, correction intake, buffer triggers and selective retraining.
//!
//! ```text
//!            labels              next_batch            corrections
//! Bootstrap --------> BulkEdit -----------> AwaitCorrections -----+
//!     ^                  ^                                        |
//!     |                  +---- None / BufferFull (retrain) -------+
//!     +----------------------- TooManyMistakes -------------------+
//! BulkEdit with an empty pool -> Done
//! ```

mod buffer;
mod config;
mod snapshot;

pub use buffer::{select_from_buffer, BufferEntry};
pub use config::{
    SessionConfig, SortDirection, TimingMode, LOGICAL_SECONDS_PER_INFERENCE,
    LOGICAL_SECONDS_PER_TRAIN_EXAMPLE,
};
pub use snapshot::{SessionSnapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::classifier::{
    balance, init_model, prepare_binary_dataset, train, BinaryExample, ModelParams, TrainConfig,
};
use crate::error::{Error, Result};
use crate::feature_store::{Dataset, Sample};
use crate::metrics::{IterationKind, Report, TrainingRecord, TrainingTrigger};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Bootstrap,
    BulkEdit,
    AwaitCorrections,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerKind {
    None,
    BufferFull,
    TooManyMistakes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerOutcome {
    pub kind: TriggerKind,
    /// Classes retrained by this trigger (or, for `TooManyMistakes`, the
    /// classes that will retrain once the new bootstrap labels arrive).
    pub retrained_classes: BTreeSet<String>,
}

impl TriggerOutcome {
    pub fn none() -> Self {
        Self {
            kind: TriggerKind::None,
            retrained_classes: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub sample_id: String,
    pub predicted_class: String,
    pub predicted_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPrediction {
    pub iteration: u64,
    pub entries: Vec<PredictionEntry>,
}

/// What happened after a set of labels was submitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsOutcome {
    pub phase: Phase,
    pub outcome: TriggerOutcome,
    pub training: Option<TrainingRecord>,
    /// Ids to label next when `phase` is `Bootstrap`.
    pub bootstrap_request: Vec<String>,
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    /// Unlabelled ids in seeded-shuffle order; requests are taken from the front.
    pub unlabelled: VecDeque<String>,
    /// Labelled ids in the order they were labelled.
    pub labelled: IndexMap<String, String>,
    #[serde(with = "snapshot::model_map")]
    pub models: BTreeMap<String, ModelParams>,
    pub buffer: Vec<BufferEntry>,
    pub iteration: u64,
    pub training_events: u64,
    pub bootstrap_request: Vec<String>,
    pub batch: Option<BatchPrediction>,
}

#[derive(Debug, Clone)]
struct SessionClock {
    mode: TimingMode,
    started: Instant,
    carried_seconds: f64,
    logical_seconds: f64,
}

impl SessionClock {
    fn new(mode: TimingMode) -> Self {
        Self {
            mode,
            started: Instant::now(),
            carried_seconds: 0.0,
            logical_seconds: 0.0,
        }
    }

    fn elapsed_seconds(&self) -> f64 {
        match self.mode {
            TimingMode::Monotonic => self.carried_seconds + self.started.elapsed().as_secs_f64(),
            TimingMode::Logical => self.logical_seconds,
        }
    }
}

/// A live labelling session over one dataset. Single writer: every mutating
/// operation takes `&mut self`.
#[derive(Debug, Clone)]
pub struct Session {
    dataset: Arc<Dataset>,
    config: SessionConfig,
    state: SessionState,
    report: Report,
    clock: SessionClock,
}

fn phase_error(op: &'static str, phase: Phase) -> Error {
    Error::Phase { op, phase }
}

fn check_label(id: &str, label: &str) -> Result<()> {
    if label.trim().is_empty() {
        return Err(Error::Validation(format!("empty class label for `{id}`")));
    }
    Ok(())
}

impl Session {
    /// Creates a session and returns it with the first bootstrap request.
    pub fn start(dataset: Arc<Dataset>, config: SessionConfig) -> Result<(Self, Vec<String>)> {
        config.validate()?;
        if dataset.len() < config.bootstrap_size {
            return Err(Error::config(
                "bootstrap_size",
                format!(
                    "dataset has {} samples, fewer than bootstrap_size {}",
                    dataset.len(),
                    config.bootstrap_size
                ),
            ));
        }
        let unlabelled: VecDeque<String> = dataset.shuffled_ids(config.seed).into();
        let request: Vec<String> = unlabelled.iter().take(config.bootstrap_size).cloned().collect();
        let report = Report::new(dataset.name(), dataset.len(), config.balancing);
        let clock = SessionClock::new(config.timing);
        let session = Self {
            state: SessionState {
                phase: Phase::Bootstrap,
                unlabelled,
                labelled: IndexMap::new(),
                models: BTreeMap::new(),
                buffer: Vec::new(),
                iteration: 0,
                training_events: 0,
                bootstrap_request: request.clone(),
                batch: None,
            },
            dataset,
            config,
            report,
            clock,
        };
        Ok((session, request))
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn bootstrap_request(&self) -> &[String] {
        &self.state.bootstrap_request
    }

    pub fn current_batch(&self) -> Option<&BatchPrediction> {
        self.state.batch.as_ref()
    }

    pub fn model(&self, class_label: &str) -> Option<&ModelParams> {
        self.state.models.get(class_label)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.state.models.keys().map(String::as_str)
    }

    /// Live capacity: current class count times `buffer_per_class`.
    pub fn buffer_capacity(&self) -> usize {
        self.state.models.len() * self.config.buffer_per_class
    }

    /// The report so far, with aggregates refreshed but not finalized.
    pub fn report(&self) -> Report {
        let mut report = self.report.clone();
        report.class_count = self.state.models.len();
        report.total_minutes = self.clock.elapsed_seconds() / 60.0;
        report.refresh();
        report
    }

    pub fn finalize_report(&self) -> Result<Report> {
        self.report().finalize()
    }

    /// Spawns an untrained head for a new class; existing heads are untouched.
    pub fn add_class(&mut self, class_label: &str) -> Result<()> {
        if self.state.phase == Phase::Done {
            return Err(phase_error("add_class", Phase::Done));
        }
        check_label("add_class", class_label)?;
        if self.state.models.contains_key(class_label) {
            return Err(Error::DuplicateClass(class_label.to_string()));
        }
        self.spawn_model(class_label);
        Ok(())
    }

    fn spawn_model(&mut self, class_label: &str) {
        let seed = derive_seed(self.config.seed, &format!("init:{class_label}"), 0);
        let model = init_model(class_label, self.dataset.dim(), seed)
            .expect("dataset dimension is positive");
        debug!(class = class_label, "spawned model");
        self.state.models.insert(class_label.to_string(), model);
    }

    /// Validates a label submission for the current phase without applying it.
    pub fn check_labels(&self, labels: &BTreeMap<String, String>) -> Result<()> {
        match self.state.phase {
            Phase::Bootstrap => self.check_bootstrap_labels(labels),
            Phase::AwaitCorrections => self.check_corrections(labels),
            phase => Err(phase_error("submit_labels", phase)),
        }
    }

    /// Routes labels to the bootstrap or correction path by phase.
    pub fn submit_labels(&mut self, labels: &BTreeMap<String, String>) -> Result<LabelsOutcome> {
        match self.state.phase {
            Phase::Bootstrap => self.submit_bootstrap_labels(labels),
            Phase::AwaitCorrections => self.submit_corrections(labels),
            phase => Err(phase_error("submit_labels", phase)),
        }
    }

    fn check_bootstrap_labels(&self, labels: &BTreeMap<String, String>) -> Result<()> {
        if self.state.phase != Phase::Bootstrap {
            return Err(phase_error("submit_bootstrap_labels", self.state.phase));
        }
        let requested: HashSet<&str> = self.state.bootstrap_request.iter().map(String::as_str).collect();
        if let Some(extra) = labels.keys().find(|id| !requested.contains(id.as_str())) {
            return Err(Error::Validation(format!("`{extra}` was not requested for bootstrap")));
        }
        if let Some(missing) = self
            .state
            .bootstrap_request
            .iter()
            .find(|id| !labels.contains_key(*id))
        {
            return Err(Error::Validation(format!("missing label for `{missing}`")));
        }
        for (id, label) in labels {
            check_label(id, label)?;
        }
        Ok(())
    }

    /// Labels the bootstrap request, spawns heads for new classes and trains
    /// every head on the whole labelled pool.
    pub fn submit_bootstrap_labels(&mut self, labels: &BTreeMap<String, String>) -> Result<LabelsOutcome> {
        self.check_bootstrap_labels(labels)?;
        let request = std::mem::take(&mut self.state.bootstrap_request);
        self.take_from_pool(&request, |id| labels[id].clone());
        for label in labels.values() {
            if !self.state.models.contains_key(label) {
                self.spawn_model(label);
            }
        }
        self.report
            .record_iteration(request.len(), request.len(), IterationKind::Bootstrap)?;
        self.state.iteration += 1;

        let trigger = if self.state.training_events == 0 {
            TrainingTrigger::Bootstrap
        } else {
            TrainingTrigger::ReBootstrap
        };
        let record = self.train_on_pool(trigger)?;
        self.state.phase = Phase::BulkEdit;
        Ok(LabelsOutcome {
            phase: self.state.phase,
            outcome: TriggerOutcome::none(),
            training: Some(record),
            bootstrap_request: Vec::new(),
            iteration: self.state.iteration,
        })
    }

    /// Moves `ids` (a prefix of the unlabelled queue) into the labelled pool.
    fn take_from_pool(&mut self, ids: &[String], label_of: impl Fn(&str) -> String) {
        let removed: Vec<String> = self.state.unlabelled.drain(..ids.len()).collect();
        debug_assert_eq!(removed, ids);
        for id in ids {
            self.state.labelled.insert(id.clone(), label_of(id));
        }
    }

    /// Predicts the next batch by arg-max confidence across heads.
    pub fn next_batch(&mut self) -> Result<BatchPrediction> {
        if self.state.phase != Phase::BulkEdit {
            return Err(phase_error("next_batch", self.state.phase));
        }
        if self.state.models.is_empty() {
            return Err(Error::Validation("no models to predict with".into()));
        }
        if self.state.unlabelled.is_empty() {
            self.state.phase = Phase::Done;
            info!("unlabelled pool exhausted");
            return Ok(BatchPrediction {
                iteration: self.state.iteration,
                entries: Vec::new(),
            });
        }
        let ids: Vec<&String> = self
            .state
            .unlabelled
            .iter()
            .take(self.config.batch_size)
            .collect();
        let models = &self.state.models;
        let dataset = &self.dataset;
        let entries: Vec<PredictionEntry> = ids
            .par_iter()
            .map(|id| {
                let features = &dataset.get(id).expect("pool ids come from the dataset").features;
                predict(models, id, features)
            })
            .collect();
        self.clock.logical_seconds +=
            (entries.len() * models.len()) as f64 * LOGICAL_SECONDS_PER_INFERENCE;
        let batch = BatchPrediction {
            iteration: self.state.iteration,
            entries,
        };
        self.state.batch = Some(batch.clone());
        self.state.phase = Phase::AwaitCorrections;
        Ok(batch)
    }

    fn check_corrections(&self, corrections: &BTreeMap<String, String>) -> Result<()> {
        let batch = match (&self.state.phase, &self.state.batch) {
            (Phase::AwaitCorrections, Some(batch)) => batch,
            (phase, _) => return Err(phase_error("submit_corrections", *phase)),
        };
        let ids: HashSet<&str> = batch.entries.iter().map(|e| e.sample_id.as_str()).collect();
        for (id, label) in corrections {
            if !ids.contains(id.as_str()) {
                return Err(Error::Validation(format!("`{id}` is not in the current batch")));
            }
            check_label(id, label)?;
        }
        Ok(())
    }

    /// Applies user corrections to the pending batch; uncorrected entries keep
    /// the model's prediction. A "correction" equal to the prediction counts
    /// as an acceptance.
    pub fn submit_corrections(&mut self, corrections: &BTreeMap<String, String>) -> Result<LabelsOutcome> {
        self.check_corrections(corrections)?;
        let batch = self.state.batch.take().expect("checked above");

        let mut mistakes = 0;
        let mut final_labels = BTreeMap::new();
        for entry in &batch.entries {
            let label = match corrections.get(&entry.sample_id) {
                Some(label) if *label != entry.predicted_class => {
                    if !self.state.models.contains_key(label) {
                        self.spawn_model(label);
                    }
                    self.state.buffer.push(BufferEntry {
                        sample_id: entry.sample_id.clone(),
                        predicted_class: entry.predicted_class.clone(),
                        predicted_confidence: entry.predicted_confidence,
                        correct_class: label.clone(),
                    });
                    mistakes += 1;
                    label.clone()
                }
                _ => entry.predicted_class.clone(),
            };
            final_labels.insert(entry.sample_id.clone(), label);
        }
        let ids: Vec<String> = batch.entries.iter().map(|e| e.sample_id.clone()).collect();
        self.take_from_pool(&ids, |id| final_labels[id].clone());
        self.report
            .record_iteration(ids.len(), mistakes, IterationKind::BulkEdit)?;
        self.state.iteration += 1;

        let (outcome, training) = self.evaluate_triggers(mistakes)?;
        Ok(LabelsOutcome {
            phase: self.state.phase,
            outcome,
            training,
            bootstrap_request: self.state.bootstrap_request.clone(),
            iteration: self.state.iteration,
        })
    }

    /// Buffer-full is checked before too-many-mistakes.
    fn evaluate_triggers(&mut self, mistakes: usize) -> Result<(TriggerOutcome, Option<TrainingRecord>)> {
        let capacity = self.buffer_capacity();
        if self.state.buffer.len() >= capacity {
            let record = self.retrain_from_buffer(capacity)?;
            self.state.phase = Phase::BulkEdit;
            let outcome = TriggerOutcome {
                kind: TriggerKind::BufferFull,
                retrained_classes: record.classes_trained.clone(),
            };
            return Ok((outcome, Some(record)));
        }
        if mistakes > self.config.mistake_threshold {
            let classes: BTreeSet<String> = self.state.models.keys().cloned().collect();
            let request: Vec<String> = self
                .state
                .unlabelled
                .iter()
                .take(self.config.bootstrap_size)
                .cloned()
                .collect();
            let outcome = TriggerOutcome {
                kind: TriggerKind::TooManyMistakes,
                retrained_classes: classes,
            };
            if request.is_empty() {
                // Nothing left to label: retrain on the full pool right away.
                let record = self.train_on_pool(TrainingTrigger::ReBootstrap)?;
                self.state.phase = Phase::Done;
                return Ok((outcome, Some(record)));
            }
            info!(mistakes, "too many mistakes, returning to bootstrap");
            self.state.bootstrap_request = request;
            self.state.phase = Phase::Bootstrap;
            return Ok((outcome, None));
        }
        self.state.phase = Phase::BulkEdit;
        Ok((TriggerOutcome::none(), None))
    }

    /// Selective retraining: the top mistakes per class form the training set
    /// for every head implicated in them (as the true class or as the wrongly
    /// predicted class). Selected entries leave the buffer; if it is still
    /// over capacity the oldest remaining entries are evicted.
    fn retrain_from_buffer(&mut self, capacity: usize) -> Result<TrainingRecord> {
        let selection = buffer::select_indices(
            &self.state.buffer,
            self.config.sort_direction,
            self.config.select_per_class,
        );
        let selected: Vec<usize> = selection.values().flatten().copied().collect();
        let mut classes = BTreeSet::new();
        let pool: Vec<(&Sample, &str)> = selected
            .iter()
            .map(|&i| {
                let entry = &self.state.buffer[i];
                classes.insert(entry.correct_class.clone());
                classes.insert(entry.predicted_class.clone());
                let sample = self.dataset.get(&entry.sample_id).expect("buffer ids come from the dataset");
                (sample, entry.correct_class.as_str())
            })
            .collect();
        let plans: Vec<(String, Vec<BinaryExample>)> = classes
            .into_iter()
            .filter(|c| self.state.models.contains_key(c))
            .map(|c| {
                let data = prepare_binary_dataset(&pool, &c);
                (c, data)
            })
            .collect();
        let record = self.run_training_event(plans, TrainingTrigger::BufferFull)?;

        let selected: HashSet<usize> = selected.into_iter().collect();
        let mut position = 0;
        self.state.buffer.retain(|_| {
            let keep = !selected.contains(&position);
            position += 1;
            keep
        });
        if self.state.buffer.len() > capacity {
            let excess = self.state.buffer.len() - capacity;
            self.state.buffer.drain(..excess);
        }
        Ok(record)
    }

    fn train_on_pool(&mut self, trigger: TrainingTrigger) -> Result<TrainingRecord> {
        let pool: Vec<(&Sample, &str)> = self
            .state
            .labelled
            .iter()
            .map(|(id, label)| {
                (self.dataset.get(id).expect("labelled ids come from the dataset"), label.as_str())
            })
            .collect();
        let plans: Vec<(String, Vec<BinaryExample>)> = self
            .state
            .models
            .keys()
            .map(|c| (c.clone(), prepare_binary_dataset(&pool, c)))
            .collect();
        self.run_training_event(plans, trigger)
    }

    /// Trains the planned heads concurrently and records one training event.
    fn run_training_event(
        &mut self,
        mut plans: Vec<(String, Vec<BinaryExample>)>,
        trigger: TrainingTrigger,
    ) -> Result<TrainingRecord> {
        let event = self.state.training_events;
        let started = Instant::now();
        let balancing = self.config.balancing;
        let base_seed = self.config.seed;
        let base_train = self.config.train_config.clone();

        plans.sort_by(|a, b| a.0.cmp(&b.0));
        let mut jobs = Vec::with_capacity(plans.len());
        let mut plans = plans.into_iter().peekable();
        for (class, model) in self.state.models.iter_mut() {
            if plans.peek().is_some_and(|(c, _)| c == class) {
                let (_, data) = plans.next().expect("peeked");
                jobs.push((model, data));
            }
        }
        let classes: BTreeSet<String> = jobs.iter().map(|(m, _)| m.class_label.clone()).collect();

        // Heads are independent, so each trains on its own copy of the config.
        let results: Vec<Result<u64>> = jobs
            .into_par_iter()
            .map(|(model, data)| {
                let data = if balancing {
                    let seed = derive_seed(base_seed, &format!("balance:{}", model.class_label), event);
                    balance(&data, seed).examples
                } else {
                    data
                };
                let config = TrainConfig {
                    seed: derive_seed(base_train.seed, &format!("train:{}", model.class_label), event),
                    ..base_train.clone()
                };
                train(model, &data, &config).map(|stats| stats.examples_processed)
            })
            .collect();
        let mut processed = 0;
        for r in results {
            processed += r?;
        }

        let logical = processed as f64 * LOGICAL_SECONDS_PER_TRAIN_EXAMPLE;
        self.clock.logical_seconds += logical;
        let duration = match self.config.timing {
            TimingMode::Monotonic => started.elapsed().as_secs_f64(),
            TimingMode::Logical => logical,
        };
        self.state.training_events += 1;
        info!(event = event + 1, ?trigger, classes = classes.len(), duration, "training event");
        Ok(self.report.record_training(trigger, duration, classes).clone())
    }
}

/// Arg-max over heads; ties go to the lexicographically smallest label.
fn predict(models: &BTreeMap<String, ModelParams>, id: &str, features: &[f32]) -> PredictionEntry {
    let mut best: Option<(&str, f64)> = None;
    for (class, model) in models {
        let confidence = model.forward_unchecked(features);
        if best.is_none_or(|(_, c)| confidence > c) {
            best = Some((class, confidence));
        }
    }
    let (class, confidence) = best.expect("at least one model");
    PredictionEntry {
        sample_id: id.to_string(),
        predicted_class: class.to_string(),
        predicted_confidence: confidence,
    }
}
