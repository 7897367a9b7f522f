//! The API error taxonomy: every failure is `{code, message}` with a fixed
//! code and matching HTTP status.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pulse_core::corpus::CorpusError;
use pulse_core::llm::LlmError;
use pulse_core::pipeline::PipelineError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    SchemaMismatch,
    NotFound,
    JobConflict,
    WrongCardinality,
    MalformedOutput,
    ProviderUnavailable,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::SchemaMismatch => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::JobConflict => StatusCode::CONFLICT,
            ErrorCode::WrongCardinality | ErrorCode::MalformedOutput => StatusCode::BAD_GATEWAY,
            ErrorCode::ProviderUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            job_id: None,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidRequest, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("unknown {what} {id:?}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Llm { source, .. } => match source {
                LlmError::ProviderUnavailable { .. } | LlmError::FixtureMiss { .. } | LlmError::AuthFailure(_) => {
                    ErrorCode::ProviderUnavailable
                }
                LlmError::MalformedOutput { .. } | LlmError::SchemaViolation { .. } => ErrorCode::MalformedOutput,
                LlmError::InvalidRequest(_) | LlmError::Config(_) => ErrorCode::Internal,
            },
            PipelineError::WrongCardinality { .. } => ErrorCode::WrongCardinality,
            PipelineError::EmptyCatalog | PipelineError::EmptyInput(_) => ErrorCode::InvalidRequest,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::SchemaMismatch { .. } | CorpusError::InvalidRow { .. } => ErrorCode::SchemaMismatch,
            CorpusError::DuplicateThreadId(_) | CorpusError::DuplicatePostId(_) => ErrorCode::SchemaMismatch,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}
