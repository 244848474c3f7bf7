use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use binlabel_api::ErrorBody;
use binlabel_core::Error;

/// An error response: status code plus a JSON [`ErrorBody`].
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: kind.into(),
                message: message.into(),
                field: None,
            },
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`"))
    }

    pub fn busy(id: &str) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "busy",
            format!("session `{id}` is still applying a submission"),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    /// Errors raised while reading a dataset are the client's data, not ours.
    pub fn dataset(err: Error) -> Self {
        match err {
            Error::Io(e) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dataset", e.to_string()),
            other => other.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        let (status, kind) = match &err {
            Error::Parse { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "parse"),
            Error::Dataset(_) => (StatusCode::UNPROCESSABLE_ENTITY, "dataset"),
            Error::Checkpoint(_) => (StatusCode::UNPROCESSABLE_ENTITY, "checkpoint"),
            Error::Argument(_) => (StatusCode::BAD_REQUEST, "argument"),
            Error::Config { .. } => (StatusCode::BAD_REQUEST, "config"),
            Error::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            Error::DuplicateClass(_) => (StatusCode::CONFLICT, "duplicate_class"),
            Error::Phase { .. } => (StatusCode::CONFLICT, "phase"),
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let api = Self::new(status, kind, message);
        match err {
            Error::Config { field, .. } => api.with_field(format!("config.{field}")),
            _ => api,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
