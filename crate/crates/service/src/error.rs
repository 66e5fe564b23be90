use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use exroute_core::Error as CoreError;

use crate::wire::{ErrorBody, ErrorDetail};

/// An error returned to HTTP clients with a status, a stable code, and
/// optionally the offending request field.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl ToString) -> Self {
        Self {
            status,
            code,
            message: message.to_string(),
            field: None,
        }
    }

    pub fn validation(field: impl Into<String>, message: impl ToString) -> Self {
        let field = field.into();
        Self {
            message: format!("{field}: {}", message.to_string()),
            field: Some(field),
            ..Self::new(StatusCode::BAD_REQUEST, "validation", "")
        }
    }

    pub fn conflict(message: impl ToString) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn capability(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "capability", message)
    }

    pub fn limit(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "limit", message)
    }

    pub fn unavailable(message: impl ToString) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }

    pub fn too_large(message: impl ToString) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", message)
    }

    pub fn not_found(message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }

    pub fn code(&self) -> &'static str {
        self.code
    }

    pub fn field(&self) -> Option<&str> {
        self.field.as_deref()
    }

    /// Maps a library error raised while matching `field`'s data.
    pub fn from_core(field: &str, err: CoreError) -> Self {
        match err {
            CoreError::EmptyRegistry => Self::unavailable("no experts are registered"),
            CoreError::MissingCentroids(_) => Self::capability(err),
            CoreError::DuplicateExpert(_) => Self::conflict(err),
            CoreError::UnknownExpert(_) => Self::validation(field, err),
            CoreError::Dimension { .. }
            | CoreError::InvalidInput(_)
            | CoreError::ZeroNorm(_)
            | CoreError::NonFinite(_) => Self::validation(field, err),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
                field: self.field,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
