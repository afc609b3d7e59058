use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use moodtune_core::api::{ErrorBody, ErrorDetail};
use moodtune_core::{PipelineError, ProviderError};
use thiserror::Error;

/// Every failure a handler can report. Messages go to participants, so they
/// never name the recommendation policies.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("admin token missing or wrong")]
    Unauthorized,
    #[error("log in with the music service first")]
    AuthRequired,
    #[error("{0} not found")]
    NotFound(&'static str),
    #[error("{message}")]
    Conflict { code: &'static str, message: String },
    #[error("{message}")]
    Unprocessable { code: &'static str, message: String },
    #[error("a music provider is unavailable; try again shortly")]
    ProviderUnavailable,
    #[error("not enough candidate songs to build a pair")]
    PoolTooSmall,
    #[error("internal error")]
    Internal,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unauthorized | ApiError::AuthRequired => StatusCode::UNAUTHORIZED,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict { .. } => StatusCode::CONFLICT,
            ApiError::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::ProviderUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::PoolTooSmall => StatusCode::BAD_GATEWAY,
            ApiError::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "invalid_request",
            ApiError::Unauthorized => "unauthorized",
            ApiError::AuthRequired => "auth_required",
            ApiError::NotFound(_) => "not_found",
            ApiError::Conflict { code, .. } | ApiError::Unprocessable { code, .. } => code,
            ApiError::ProviderUnavailable => "provider_unavailable",
            ApiError::PoolTooSmall => "pool_too_small",
            ApiError::Internal => "internal",
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(self, ApiError::ProviderUnavailable)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::Unprocessable {
            code,
            message: message.into(),
        }
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::Conflict {
            code,
            message: message.into(),
        }
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::AuthExpired => ApiError::AuthRequired,
            other => {
                tracing::warn!(error = %other, "provider failure");
                ApiError::ProviderUnavailable
            }
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Provider(p) => p.into(),
            PipelineError::PoolTooSmall { .. }
            | PipelineError::InsufficientPool(_)
            | PipelineError::EmptyTaste => {
                tracing::warn!(error = %e, "cannot build a pair");
                ApiError::PoolTooSmall
            }
            other => {
                tracing::error!(error = %other, "pair generation failed");
                ApiError::Internal
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code().to_string(),
                message: self.to_string(),
                retryable: self.retryable(),
            },
        };
        (self.status(), Json(body)).into_response()
    }
}
