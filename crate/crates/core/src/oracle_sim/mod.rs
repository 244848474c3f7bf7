//! Unattended runs: ground-truth labels stand in for the human annotator.
//!
//! The driver talks to a [`LabellingBackend`], so the same loop runs against
//! an in-process [`Session`] or a remote service.

mod synthetic;

pub use synthetic::{make_synthetic, WITHIN_CLUSTER_STD};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::Dataset;
use crate::metrics::Report;
use crate::session::{BatchPrediction, LabelsOutcome, Phase, Session, SessionConfig};

/// The protocol surface the simulated annotator needs.
pub trait LabellingBackend {
    type Error: From<Error>;

    /// Opens a session and returns the first bootstrap request.
    fn start(&mut self) -> Result<Vec<String>, Self::Error>;
    fn submit_labels(&mut self, labels: &BTreeMap<String, String>) -> Result<LabelsOutcome, Self::Error>;
    /// The next batch and the phase after requesting it.
    fn next_batch(&mut self) -> Result<(Phase, BatchPrediction), Self::Error>;
    /// The finalized report.
    fn finish(&mut self) -> Result<Report, Self::Error>;
}

/// In-process backend over [`Session`].
#[derive(Debug)]
pub struct LocalBackend {
    dataset: Arc<Dataset>,
    config: SessionConfig,
    session: Option<Session>,
}

impl LocalBackend {
    pub fn new(dataset: Arc<Dataset>, config: SessionConfig) -> Self {
        Self {
            dataset,
            config,
            session: None,
        }
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    fn live(&mut self) -> Result<&mut Session> {
        self.session
            .as_mut()
            .ok_or_else(|| Error::Validation("session not started".into()))
    }
}

impl LabellingBackend for LocalBackend {
    type Error = Error;

    fn start(&mut self) -> Result<Vec<String>> {
        let (session, request) = Session::start(self.dataset.clone(), self.config.clone())?;
        self.session = Some(session);
        Ok(request)
    }

    fn submit_labels(&mut self, labels: &BTreeMap<String, String>) -> Result<LabelsOutcome> {
        self.live()?.submit_labels(labels)
    }

    fn next_batch(&mut self) -> Result<(Phase, BatchPrediction)> {
        let session = self.live()?;
        let batch = session.next_batch()?;
        Ok((session.phase(), batch))
    }

    fn finish(&mut self) -> Result<Report> {
        self.live()?.finalize_report()
    }
}

/// Per-class prediction tallies over bulk-edit batches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    /// Samples of this class that reached a bulk-edit batch.
    pub support: usize,
    /// Of those, how many the models predicted correctly.
    pub true_positives: usize,
    /// Batch entries predicted as this class.
    pub predicted: usize,
}

impl ClassTally {
    pub fn recall(&self) -> f64 {
        if self.support == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.support as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub report: Report,
    pub tallies: BTreeMap<String, ClassTally>,
}

fn truth_of(dataset: &Dataset, id: &str) -> Result<String> {
    dataset
        .get(id)
        .and_then(|s| s.truth_label.clone())
        .ok_or_else(|| Error::Validation(format!("no ground-truth label for `{id}`")))
}

/// Drives `backend` to completion, answering every request from `truth`.
pub fn drive<B: LabellingBackend>(backend: &mut B, truth: &Dataset) -> Result<SimulationOutcome, B::Error> {
    if !truth.is_fully_labelled() {
        return Err(Error::Validation("every sample needs a ground-truth label to simulate".into()).into());
    }
    let mut tallies: BTreeMap<String, ClassTally> = BTreeMap::new();
    let mut request = backend.start()?;
    let mut phase = Phase::Bootstrap;
    loop {
        match phase {
            Phase::Bootstrap => {
                let labels = request
                    .iter()
                    .map(|id| Ok((id.clone(), truth_of(truth, id)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                let outcome = backend.submit_labels(&labels)?;
                phase = outcome.phase;
                request = outcome.bootstrap_request;
            }
            Phase::BulkEdit => {
                let (next_phase, batch) = backend.next_batch()?;
                if batch.entries.is_empty() {
                    phase = next_phase;
                    if phase != Phase::Done {
                        return Err(Error::Validation("backend returned an empty batch".into()).into());
                    }
                    continue;
                }
                let mut corrections = BTreeMap::new();
                for entry in &batch.entries {
                    let label = truth_of(truth, &entry.sample_id)?;
                    let correct = entry.predicted_class == label;
                    let tally = tallies.entry(label.clone()).or_default();
                    tally.support += 1;
                    tally.true_positives += usize::from(correct);
                    tallies.entry(entry.predicted_class.clone()).or_default().predicted += 1;
                    if !correct {
                        corrections.insert(entry.sample_id.clone(), label);
                    }
                }
                let outcome = backend.submit_labels(&corrections)?;
                phase = outcome.phase;
                request = outcome.bootstrap_request;
            }
            Phase::AwaitCorrections => {
                return Err(Error::Validation("backend is waiting for corrections".into()).into());
            }
            Phase::Done => break,
        }
    }
    Ok(SimulationOutcome {
        report: backend.finish()?,
        tallies,
    })
}

/// Runs a full in-process simulation and returns the finalized report.
pub fn run_simulation(dataset: Arc<Dataset>, config: SessionConfig) -> Result<Report> {
    simulate(dataset, config).map(|o| o.report)
}

pub fn simulate(dataset: Arc<Dataset>, config: SessionConfig) -> Result<SimulationOutcome> {
    let mut backend = LocalBackend::new(dataset.clone(), config);
    drive(&mut backend, &dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::Sample;
    use crate::metrics::IterationKind;
    use crate::session::TimingMode;

    fn config(seed: u64) -> SessionConfig {
        SessionConfig {
            seed,
            timing: TimingMode::Logical,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn unlabelled_sample_is_rejected_before_starting() {
        let mut samples: Vec<Sample> = (0..40)
            .map(|i| Sample {
                id: format!("s{i}"),
                features: vec![i as f32],
                truth_label: Some("a".into()),
                thumbnail_url: None,
            })
            .collect();
        samples[7].truth_label = None;
        let ds = Arc::new(Dataset::new("t", samples).unwrap());
        let mut backend = LocalBackend::new(ds.clone(), config(1));
        assert!(matches!(drive(&mut backend, &ds), Err(Error::Validation(_))));
        assert!(backend.session().is_none());
    }

    #[test]
    fn single_class_dataset_is_fully_model_labelled_after_bootstrap() {
        let ds = Arc::new(make_synthetic(1, 150, 4, 8.0, 3).unwrap());
        let report = run_simulation(ds, config(2)).unwrap();
        let bulk: Vec<_> = report.bulk_edit_iterations().collect();
        assert!(!bulk.is_empty());
        assert!(bulk.iter().all(|r| r.contribution_percent() == 100.0));
        assert_eq!(report.iteration_series[0].kind, IterationKind::Bootstrap);
        let labelled: usize = report.iteration_series.iter().map(|r| r.batch_len).sum();
        assert_eq!(labelled, 150);
    }

    #[test]
    fn same_seed_same_report() {
        let ds = Arc::new(make_synthetic(3, 60, 8, 6.0, 9).unwrap());
        let a = run_simulation(ds.clone(), config(4)).unwrap();
        let b = run_simulation(ds, config(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_never_lies() {
        let ds = Arc::new(make_synthetic(4, 50, 6, 3.0, 5).unwrap());
        let mut backend = LocalBackend::new(ds.clone(), config(6));
        drive(&mut backend, &ds).unwrap();
        let state = backend.session().unwrap().state();
        // Model-accepted labels can be wrong; user-supplied ones never are.
        for entry in &state.buffer {
            assert_eq!(
                Some(&entry.correct_class),
                ds.get(&entry.sample_id).unwrap().truth_label.as_ref()
            );
        }
        assert_eq!(state.labelled.len(), ds.len());
        assert!(state.unlabelled.is_empty());
    }
}
