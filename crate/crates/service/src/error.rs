use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use triage_core::gnn::GnnError;
use triage_core::ingest::IngestError;

/// JSON error body: a stable code, a message and, where it applies, the
/// offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error,
                message: message.into(),
                field: None,
                features: Vec::new(),
            },
        }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        let mut e = Self::new(StatusCode::BAD_REQUEST, "invalid_field", message);
        e.body.field = Some(field.to_string());
        e
    }

    pub fn not_loaded() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "bundle_not_loaded",
            "no model bundle is loaded",
        )
    }

    pub fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_entry", format!("no queue entry {id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<GnnError> for ApiError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::OutOfRange { features } => {
                let mut err = Self::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "out_of_range",
                    format!("outside the fitted range: {}", features.join(", ")),
                );
                err.body.features = features;
                err
            }
            GnnError::Ingest(IngestError::InvalidValue { field, reason }) => Self::field(&field, reason),
            GnnError::Ingest(IngestError::UnseenCategory { field, value }) => {
                Self::field(&field, format!("value {value:?} was not seen in training"))
            }
            other => Self::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
