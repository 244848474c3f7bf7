//! Blocking client for the binlabel service.
//!
//! [`Client`] maps each endpoint to a typed method. [`RemoteBackend`] plugs a
//! remote session into [`binlabel_core::oracle_sim::drive`], so simulations
//! can run against a live server.

use std::thread;
use std::time::Duration;

use binlabel_api::{
    AddClassRequest, AddClassResponse, BatchResponse, BatchPrediction, CreateSessionRequest,
    CreateSessionResponse, ErrorBody, Health, LabelMap, LabelsOutcome, Phase, Report,
    RestoreSessionRequest, SampleView, SessionSnapshot, SessionStatus, SubmissionAccepted,
};
use binlabel_core::oracle_sim::LabellingBackend;
use reqwest::blocking::{RequestBuilder, Response};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use binlabel_api as api;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error status.
    #[error("HTTP {status}: {}", .body.message)]
    Http { status: u16, body: ErrorBody },

    /// A background submission failed after it was accepted.
    #[error("submission failed: {}", .0.message)]
    Submission(ErrorBody),

    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("unexpected response: {0}")]
    Decode(String),

    #[error("timed out waiting for session `{0}`")]
    Timeout(String),

    #[error(transparent)]
    Core(#[from] binlabel_core::Error),
}

impl ClientError {
    /// HTTP status for [`ClientError::Http`].
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

/// Result of a label submission.
#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    Applied(LabelsOutcome),
    /// Accepted for background processing; poll with [`Client::wait_for`].
    Accepted(SubmissionAccepted),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
    poll_interval: Duration,
    poll_timeout: Duration,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(None)
            .build()?;
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            http,
            poll_interval: Duration::from_millis(50),
            poll_timeout: Duration::from_secs(3600),
        })
    }

    pub fn with_polling(mut self, interval: Duration, timeout: Duration) -> Self {
        self.poll_interval = interval;
        self.poll_timeout = timeout;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    fn send<T: DeserializeOwned>(&self, builder: RequestBuilder) -> Result<T> {
        decode(check(builder.send()?)?)
    }

    fn send_json<B: Serialize + ?Sized, T: DeserializeOwned>(&self, method: Method, path: &str, body: &B) -> Result<T> {
        self.send(self.request(method, path).json(body))
    }

    pub fn health(&self) -> Result<Health> {
        self.send(self.request(Method::GET, "/health"))
    }

    pub fn list_sessions(&self) -> Result<Vec<String>> {
        self.send(self.request(Method::GET, "/sessions"))
    }

    pub fn create_session(&self, req: &CreateSessionRequest) -> Result<CreateSessionResponse> {
        self.send_json(Method::POST, "/sessions", req)
    }

    pub fn restore_session(&self, req: &RestoreSessionRequest) -> Result<SessionStatus> {
        self.send_json(Method::POST, "/sessions/restore", req)
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}")))
    }

    pub fn delete_session(&self, id: &str) -> Result<()> {
        check(self.request(Method::DELETE, &format!("/sessions/{id}")).send()?)?;
        Ok(())
    }

    /// Posts labels without waiting for background work.
    pub fn post_labels(&self, id: &str, labels: &LabelMap) -> Result<Submission> {
        let response = check(
            self.request(Method::POST, &format!("/sessions/{id}/labels"))
                .json(labels)
                .send()?,
        )?;
        if response.status() == StatusCode::ACCEPTED {
            decode(response).map(Submission::Accepted)
        } else {
            decode(response).map(Submission::Applied)
        }
    }

    /// Posts labels and, for asynchronous sessions, polls until they are applied.
    pub fn submit_labels(&self, id: &str, labels: &LabelMap) -> Result<LabelsOutcome> {
        match self.post_labels(id, labels)? {
            Submission::Applied(outcome) => Ok(outcome),
            Submission::Accepted(accepted) => self.wait_for(&accepted),
        }
    }

    pub fn wait_for(&self, accepted: &SubmissionAccepted) -> Result<LabelsOutcome> {
        let mut waited = Duration::ZERO;
        loop {
            let status = self.status(&accepted.session_id)?;
            if !status.training && status.completed_submissions >= accepted.submission {
                return match (status.last_outcome, status.last_error) {
                    (_, Some(err)) => Err(ClientError::Submission(err)),
                    (Some(outcome), None) => Ok(outcome),
                    (None, None) => Err(ClientError::Decode("finished submission has no outcome".into())),
                };
            }
            if waited >= self.poll_timeout {
                return Err(ClientError::Timeout(accepted.session_id.clone()));
            }
            thread::sleep(self.poll_interval);
            waited += self.poll_interval;
        }
    }

    pub fn next_batch(&self, id: &str) -> Result<BatchResponse> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}/batch")))
    }

    pub fn metrics(&self, id: &str) -> Result<Report> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}/metrics")))
    }

    pub fn final_report(&self, id: &str) -> Result<Report> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}/report")))
    }

    pub fn add_class(&self, id: &str, class_label: &str) -> Result<AddClassResponse> {
        let body = AddClassRequest {
            class_label: class_label.into(),
        };
        self.send_json(Method::POST, &format!("/sessions/{id}/classes"), &body)
    }

    pub fn sample(&self, id: &str, sample_id: &str) -> Result<SampleView> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}/samples/{sample_id}")))
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot> {
        self.send(self.request(Method::GET, &format!("/sessions/{id}/snapshot")))
    }
}

fn check(response: Response) -> Result<Response> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    let text = response.text()?;
    let body = serde_json::from_str(&text).unwrap_or_else(|_| ErrorBody {
        error: "http".into(),
        message: if text.is_empty() { status.to_string() } else { text },
        field: None,
    });
    Err(ClientError::Http {
        status: status.as_u16(),
        body,
    })
}

fn decode<T: DeserializeOwned>(response: Response) -> Result<T> {
    let bytes = response.bytes()?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

/// A [`LabellingBackend`] over one remote session.
#[derive(Debug)]
pub struct RemoteBackend {
    client: Client,
    request: CreateSessionRequest,
    session_id: Option<String>,
}

impl RemoteBackend {
    pub fn new(client: Client, request: CreateSessionRequest) -> Self {
        Self {
            client,
            request,
            session_id: None,
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        self.session_id.as_deref()
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    fn id(&self) -> Result<&str> {
        self.session_id
            .as_deref()
            .ok_or_else(|| binlabel_core::Error::Validation("session not started".into()).into())
    }
}

impl LabellingBackend for RemoteBackend {
    type Error = ClientError;

    fn start(&mut self) -> Result<Vec<String>> {
        let created = self.client.create_session(&self.request)?;
        self.session_id = Some(created.session_id);
        Ok(created.bootstrap_ids)
    }

    fn submit_labels(&mut self, labels: &LabelMap) -> Result<LabelsOutcome> {
        self.client.submit_labels(self.id()?, labels)
    }

    fn next_batch(&mut self) -> Result<(Phase, BatchPrediction)> {
        let response = self.client.next_batch(self.id()?)?;
        Ok((response.phase, response.batch))
    }

    fn finish(&mut self) -> Result<Report> {
        self.client.final_report(self.id()?)
    }
}
