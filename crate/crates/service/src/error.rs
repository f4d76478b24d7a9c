use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use driftlab_api::ErrorBody;
use driftlab_core::CoreError;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn stale_revision(expected: u64, current: u64) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "stale_revision",
            format!("revision {expected} is stale; session is at {current}"),
        )
        .with_detail(json!({ "expected": expected, "current": current }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code, detail) = match &e {
            CoreError::Parse { row, column, .. } => (S::BAD_REQUEST, "parse_error", Some(json!({ "row": row, "column": column }))),
            CoreError::NonFinite { row, column } => (S::BAD_REQUEST, "non_finite", Some(json!({ "row": row, "column": column }))),
            CoreError::Schema(_) => (S::BAD_REQUEST, "schema_error", None),
            CoreError::OutOfOrder { tick, end_tick } => {
                (S::CONFLICT, "out_of_order", Some(json!({ "tick": tick, "end_tick": end_tick })))
            }
            CoreError::InvalidArgument(_) => (S::BAD_REQUEST, "invalid_argument", None),
            CoreError::UnknownSample(id) => (S::BAD_REQUEST, "unknown_sample", Some(json!({ "id": id }))),
            CoreError::Unlabeled(id) => (S::BAD_REQUEST, "unlabeled", Some(json!({ "id": id }))),
            CoreError::UnknownComponent(id) => (S::NOT_FOUND, "unknown_component", Some(json!({ "id": id }))),
            CoreError::UnknownLearner(id) => (S::BAD_REQUEST, "unknown_learner", Some(json!({ "id": id }))),
            CoreError::UnknownSampleSet(name) => (S::NOT_FOUND, "unknown_sample_set", Some(json!({ "name": name }))),
            CoreError::EmFailed => (S::UNPROCESSABLE_ENTITY, "em_failed", None),
            CoreError::Diverged(_) => (S::UNPROCESSABLE_ENTITY, "diverged", None),
            CoreError::Dimension { expected, got } => {
                (S::BAD_REQUEST, "dimension", Some(json!({ "expected": expected, "got": got })))
            }
            CoreError::EmptyEnsemble => (S::BAD_REQUEST, "empty_ensemble", None),
            CoreError::Serde(_) => (S::BAD_REQUEST, "invalid_json", None),
            CoreError::NoProjection => (S::NOT_FOUND, "no_projection", None),
            CoreError::TooSoon { last, period } => {
                (S::CONFLICT, "too_soon", Some(json!({ "last_update_tick": last, "period": period })))
            }
            CoreError::SchemaVersion(_) => (S::BAD_REQUEST, "schema_version", None),
        };
        Self {
            status,
            code,
            message,
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}
