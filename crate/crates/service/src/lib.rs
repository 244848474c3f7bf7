//! HTTP/JSON facade over the labelling session engine.
//!
//! Every handler is a thin call into [`binlabel_core::Session`]; protocol
//! decisions stay in the engine. See `docs/api.md` for the wire schema.

mod error;
mod extract;
mod registry;

pub use error::ApiError;
pub use extract::ApiJson;

use std::future::Future;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use binlabel_api::{
    AddClassRequest, AddClassResponse, BatchResponse, CreateSessionRequest, CreateSessionResponse,
    DatasetSource, Health, LabelMap, RestoreSessionRequest, SampleView, SessionStatus, SubmissionAccepted,
};
use binlabel_core::{Dataset, Session};
use tokio::net::TcpListener;
use tracing::{info, warn};
use uuid::Uuid;

use registry::{Registry, Slot};

/// Default request body limit; inline datasets can be large.
pub const DEFAULT_BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Base directory for relative dataset paths.
    pub data_dir: Option<PathBuf>,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<Registry>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config: Arc::new(config),
            sessions: Arc::default(),
        }
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let path = Path::new(path);
        match &self.config.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    async fn load_dataset(&self, source: DatasetSource) -> Result<Arc<Dataset>, ApiError> {
        let dataset = match source {
            DatasetSource::Path(path) => {
                let resolved = self.resolve(&path);
                tokio::task::spawn_blocking(move || {
                    Dataset::load(&resolved).map_err(|e| match e {
                        binlabel_core::Error::Io(io) => {
                            binlabel_core::Error::Io(io::Error::new(io.kind(), format!("{}: {io}", resolved.display())))
                        }
                        other => other,
                    })
                })
                .await
            }
            DatasetSource::Inline { name, jsonl } => {
                tokio::task::spawn_blocking(move || Dataset::from_reader(name, jsonl.as_bytes())).await
            }
        };
        let dataset = dataset.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?;
        dataset.map(Arc::new).map_err(ApiError::dataset)
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.body_limit;
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/restore", post(restore_session))
        .route("/sessions/{id}", get(status).delete(delete_session))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/batch", get(next_batch))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/report", get(final_report))
        .route("/sessions/{id}/classes", post(add_class))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/samples/{sample_id}", get(sample))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        info!(%addr, "listening");
    }
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.sessions.ids())
}

async fn create_session(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<CreateSessionRequest>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ApiError> {
    req.config.validate()?;
    let dataset = state.load_dataset(req.dataset).await?;
    let config = req.config;
    let (session, bootstrap_ids) = tokio::task::spawn_blocking(move || Session::start(dataset, config))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    let session_id = Uuid::new_v4().to_string();
    info!(session = %session_id, dataset = session.dataset().name(), "session created");
    let phase = session.phase();
    state
        .sessions
        .insert(Slot::new(session_id.clone(), session, req.async_training));
    Ok((
        StatusCode::CREATED,
        Json(CreateSessionResponse {
            session_id,
            phase,
            bootstrap_ids,
        }),
    ))
}

async fn restore_session(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<RestoreSessionRequest>,
) -> Result<(StatusCode, Json<SessionStatus>), ApiError> {
    let dataset = state.load_dataset(req.dataset).await?;
    let session = Session::restore(dataset, req.snapshot)?;
    let session_id = Uuid::new_v4().to_string();
    info!(session = %session_id, "session restored");
    let slot = state
        .sessions
        .insert(Slot::new(session_id, session, req.async_training));
    Ok((StatusCode::CREATED, Json(status_of(&slot))))
}

fn status_of(slot: &Slot) -> SessionStatus {
    let view = slot.view();
    let session = &view.session;
    let state = session.state();
    SessionStatus {
        session_id: slot.id.clone(),
        dataset_name: session.dataset().name().to_string(),
        phase: session.phase(),
        iteration: state.iteration,
        classes: session.classes().map(String::from).collect(),
        labelled: state.labelled.len(),
        unlabelled: state.unlabelled.len(),
        buffer_len: state.buffer.len(),
        buffer_capacity: session.buffer_capacity(),
        training_events: state.training_events,
        bootstrap_request: session.bootstrap_request().to_vec(),
        async_training: slot.async_training,
        training: view.training,
        completed_submissions: view.completed,
        last_outcome: view.last_outcome,
        last_error: view.last_error,
    }
}

async fn status(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionStatus>, ApiError> {
    Ok(Json(status_of(&*state.sessions.get(&id)?)))
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    state.sessions.remove(&id)?;
    info!(session = %id, "session deleted");
    Ok(StatusCode::NO_CONTENT)
}

async fn submit_labels(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    ApiJson(labels): ApiJson<LabelMap>,
) -> Result<Response, ApiError> {
    let slot = state.sessions.get(&id)?;
    let guard = slot.lock_writer().await?;
    if !slot.async_training {
        let outcome = slot.apply(&guard, move |s| s.submit_labels(&labels)).await?;
        slot.update(|v| {
            v.submitted += 1;
            v.completed += 1;
            v.last_outcome = Some(outcome.clone());
            v.last_error = None;
        });
        return Ok(Json(outcome).into_response());
    }

    // Reject bad submissions before answering 202.
    slot.session().check_labels(&labels)?;
    let mut submission = 0;
    slot.update(|v| {
        v.submitted += 1;
        v.training = true;
        submission = v.submitted;
    });
    let task_slot = slot.clone();
    tokio::spawn(async move {
        let result = task_slot.apply(&guard, move |s| s.submit_labels(&labels)).await;
        task_slot.update(|v| {
            v.training = false;
            v.completed = submission;
            match result {
                Ok(outcome) => {
                    v.last_outcome = Some(outcome);
                    v.last_error = None;
                }
                Err(err) => {
                    warn!(session = %task_slot.id, error = %err.body.message, "background submission failed");
                    v.last_outcome = None;
                    v.last_error = Some(err.body);
                }
            }
        });
        drop(guard);
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(SubmissionAccepted {
            session_id: slot.id.clone(),
            submission,
        }),
    )
        .into_response())
}

async fn next_batch(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<BatchResponse>, ApiError> {
    let slot = state.sessions.get(&id)?;
    let guard = slot.lock_writer().await?;
    let response = slot
        .apply(&guard, |s| {
            let batch = s.next_batch()?;
            Ok(BatchResponse { phase: s.phase(), batch })
        })
        .await?;
    Ok(Json(response))
}

async fn metrics(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<binlabel_api::Report>, ApiError> {
    Ok(Json(state.sessions.get(&id)?.session().report()))
}

async fn final_report(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<binlabel_api::Report>, ApiError> {
    Ok(Json(state.sessions.get(&id)?.session().finalize_report()?))
}

async fn add_class(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<AddClassRequest>,
) -> Result<Json<AddClassResponse>, ApiError> {
    let slot = state.sessions.get(&id)?;
    let guard = slot.lock_writer().await?;
    let response = slot
        .apply(&guard, move |s| {
            s.add_class(&req.class_label)?;
            Ok(AddClassResponse {
                classes: s.classes().map(String::from).collect(),
                buffer_capacity: s.buffer_capacity(),
            })
        })
        .await?;
    Ok(Json(response))
}

async fn snapshot(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<binlabel_api::SessionSnapshot>, ApiError> {
    Ok(Json(state.sessions.get(&id)?.session().snapshot()))
}

async fn sample(
    State(state): State<AppState>,
    UrlPath((id, sample_id)): UrlPath<(String, String)>,
) -> Result<Json<SampleView>, ApiError> {
    let session = state.sessions.get(&id)?.session();
    let sample = session.dataset().get(&sample_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no sample `{sample_id}`"))
    })?;
    Ok(Json(SampleView {
        sample_id,
        thumbnail_url: sample.thumbnail_url.clone(),
        label: session.state().labelled.get(&sample.id).cloned(),
    }))
}
