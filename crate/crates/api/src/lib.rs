//! Request and response bodies for the labelling service.
//!
//! Bodies mirror the engine's domain types field-for-field. Where a response
//! is exactly a domain value (label outcomes, reports, snapshots) the domain
//! type itself is the wire type and is re-exported here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use binlabel_core::metrics::Report;
pub use binlabel_core::session::{
    BatchPrediction, LabelsOutcome, Phase, PredictionEntry, SessionConfig, SessionSnapshot,
    TriggerKind, TriggerOutcome,
};

/// Labels keyed by sample id. Used both for bootstrap labels and corrections.
pub type LabelMap = BTreeMap<String, String>;

/// Where the service reads the dataset from.
///
/// `{"path": "flowers.jsonl"}` or `{"inline": {"name": "flowers", "jsonl": "..."}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// JSONL file on the server. Relative paths resolve against the service's
    /// data directory.
    Path(String),
    /// JSONL content sent with the request.
    Inline { name: String, jsonl: String },
}

impl DatasetSource {
    pub fn path(path: impl Into<String>) -> Self {
        Self::Path(path.into())
    }

    pub fn inline(name: impl Into<String>, jsonl: impl Into<String>) -> Self {
        Self::Inline {
            name: name.into(),
            jsonl: jsonl.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub config: SessionConfig,
    /// Run label submissions that may train in the background. The submit
    /// call then answers 202 and the client polls the session status.
    #[serde(default)]
    pub async_training: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub phase: Phase,
    pub bootstrap_ids: Vec<String>,
}

/// Restores a paused session. The dataset must match the snapshot's fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestoreSessionRequest {
    pub dataset: DatasetSource,
    pub snapshot: SessionSnapshot,
    #[serde(default)]
    pub async_training: bool,
}

/// `GET /sessions/{id}/batch`. An empty `entries` with phase `Done` means the
/// pool is exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub phase: Phase,
    #[serde(flatten)]
    pub batch: BatchPrediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddClassRequest {
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddClassResponse {
    pub classes: Vec<String>,
    pub buffer_capacity: usize,
}

/// Answer to an asynchronous label submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionAccepted {
    pub session_id: String,
    /// Sequence number of this submission; shows up as
    /// [`SessionStatus::completed_submissions`] once applied.
    pub submission: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub dataset_name: String,
    pub phase: Phase,
    pub iteration: u64,
    pub classes: Vec<String>,
    pub labelled: usize,
    pub unlabelled: usize,
    pub buffer_len: usize,
    pub buffer_capacity: usize,
    pub training_events: u64,
    pub bootstrap_request: Vec<String>,
    pub async_training: bool,
    /// A background submission is still running.
    pub training: bool,
    pub completed_submissions: u64,
    /// Result of the most recent submission, when it succeeded.
    pub last_outcome: Option<LabelsOutcome>,
    /// Error of the most recent background submission, when it failed.
    pub last_error: Option<ErrorBody>,
}

/// `GET /sessions/{id}/samples/{sample_id}`: what an annotator may see of a
/// sample. Ground-truth labels are never exposed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleView {
    pub sample_id: String,
    pub thumbnail_url: Option<String>,
    /// The label the user gave, once labelled.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable kind, e.g. `config`, `phase`, `not_found`.
    pub error: String,
    pub message: String,
    /// Offending field for configuration and request-body errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}
