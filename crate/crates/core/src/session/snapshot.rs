//! Versioned pause/resume files: the full session state, with every model
//! stored as a portable checkpoint.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Phase, Session, SessionClock, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::feature_store::Dataset;
use crate::metrics::Report;

pub const SNAPSHOT_FORMAT: &str = "binlabel-session";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSnapshot {
    pub format: String,
    pub version: u32,
    pub dataset_name: String,
    pub dataset_fingerprint: String,
    pub config: SessionConfig,
    pub state: SessionState,
    pub report: Report,
    pub elapsed_seconds: f64,
    pub logical_seconds: f64,
}

pub(super) mod model_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::classifier::{Checkpoint, ModelParams};

    pub fn serialize<S: Serializer>(
        models: &BTreeMap<String, ModelParams>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let checkpoints: Vec<Checkpoint> = models.values().map(Checkpoint::from).collect();
        checkpoints.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<String, ModelParams>, D::Error> {
        let checkpoints = Vec::<Checkpoint>::deserialize(deserializer)?;
        checkpoints
            .iter()
            .map(|c| {
                ModelParams::try_from(c)
                    .map(|m| (m.class_label.clone(), m))
                    .map_err(D::Error::custom)
            })
            .collect()
    }
}

impl Session {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            dataset_name: self.dataset.name().to_string(),
            dataset_fingerprint: self.dataset.fingerprint(),
            config: self.config.clone(),
            state: self.state.clone(),
            report: self.report.clone(),
            elapsed_seconds: self.clock.elapsed_seconds(),
            logical_seconds: self.clock.logical_seconds,
        }
    }

    /// Rebuilds a session from a snapshot taken over the same dataset.
    pub fn restore(dataset: Arc<Dataset>, snapshot: SessionSnapshot) -> Result<Self> {
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(Error::Validation(format!("unknown snapshot format `{}`", snapshot.format)));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        if snapshot.dataset_fingerprint != dataset.fingerprint() {
            return Err(Error::Validation("snapshot was taken over a different dataset".into()));
        }
        snapshot.config.validate()?;
        check_state(&snapshot.state, &dataset, &snapshot.config)?;
        let clock = SessionClock {
            mode: snapshot.config.timing,
            started: Instant::now(),
            carried_seconds: snapshot.elapsed_seconds,
            logical_seconds: snapshot.logical_seconds,
        };
        Ok(Self {
            dataset,
            config: snapshot.config,
            state: snapshot.state,
            report: snapshot.report,
            clock,
        })
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(&self.snapshot())?)?;
        Ok(())
    }

    pub fn load_snapshot(dataset: Arc<Dataset>, path: impl AsRef<Path>) -> Result<Self> {
        let snapshot: SessionSnapshot = serde_json::from_slice(&fs::read(path)?)?;
        Self::restore(dataset, snapshot)
    }
}

fn check_state(state: &SessionState, dataset: &Dataset, config: &SessionConfig) -> Result<()> {
    let invalid = |msg: &str| Err(Error::Validation(format!("inconsistent snapshot: {msg}")));
    let mut seen = HashSet::with_capacity(dataset.len());
    for id in state.unlabelled.iter().chain(state.labelled.keys()) {
        if !dataset.contains(id) || !seen.insert(id.as_str()) {
            return invalid("pools overlap or reference unknown ids");
        }
    }
    if seen.len() != dataset.len() {
        return invalid("pools do not cover the dataset");
    }
    if state.models.values().any(|m| m.dim != dataset.dim() || !m.is_consistent()) {
        return invalid("model shape does not match the dataset");
    }
    if state
        .buffer
        .iter()
        .any(|e| !state.models.contains_key(&e.correct_class) || e.correct_class == e.predicted_class)
    {
        return invalid("buffer entry without a model");
    }
    if state.buffer.len() > state.models.len() * config.buffer_per_class {
        return invalid("buffer over capacity");
    }
    let front: HashSet<&str> = state
        .unlabelled
        .iter()
        .take(config.bootstrap_size.max(config.batch_size))
        .map(String::as_str)
        .collect();
    match state.phase {
        Phase::Bootstrap if state.bootstrap_request.iter().any(|id| !front.contains(id.as_str())) => {
            invalid("bootstrap request is not at the front of the pool")
        }
        Phase::AwaitCorrections if state.batch.is_none() => invalid("missing pending batch"),
        _ => Ok(()),
    }
}
