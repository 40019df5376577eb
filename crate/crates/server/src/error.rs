use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use vllens_core::{AnalyticsError, EmbeddingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    UnknownExample,
    UnknownMetric,
    BadParameter,
    IndexOutOfRange,
    TooFewPoints,
    EmptyPool,
    FilteredQuery,
    NoImage,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::UnknownExample | ErrorCode::NoImage | ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>, field: Option<&str>) -> Self {
        Self {
            code,
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    pub fn bad_parameter(field: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadParameter, message, Some(field))
    }

    pub fn unknown_example(id: &str) -> Self {
        Self::new(ErrorCode::UnknownExample, format!("unknown example {id:?}"), Some("id"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message, None)
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match &e {
            AnalyticsError::IndexOutOfRange { field, .. } => {
                Self::new(ErrorCode::IndexOutOfRange, e.to_string(), Some(field))
            }
            AnalyticsError::UnknownMetric(_) => Self::new(ErrorCode::UnknownMetric, e.to_string(), Some("metric")),
        }
    }
}

impl From<EmbeddingError> for ApiError {
    fn from(e: EmbeddingError) -> Self {
        let msg = e.to_string();
        match e {
            EmbeddingError::TooFewPoints(_) => Self::new(ErrorCode::TooFewPoints, msg, None),
            EmbeddingError::Index(inner) => inner.into(),
            EmbeddingError::UnknownExample(_) => Self::new(ErrorCode::UnknownExample, msg, Some("example")),
            EmbeddingError::FilteredQuery { .. } => Self::new(ErrorCode::FilteredQuery, msg, Some("token")),
            EmbeddingError::EmptyPool => Self::new(ErrorCode::EmptyPool, msg, None),
            EmbeddingError::NonFiniteInput { .. } | EmbeddingError::InvalidConfig(_) | EmbeddingError::Cache { .. } => {
                Self::internal(msg)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = crate::json::to_body(&self);
        (self.status(), [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}
