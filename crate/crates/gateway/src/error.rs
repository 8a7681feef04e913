use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chatbank_core::banking::BankError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session")]
    UnknownSession,
    #[error("unknown account")]
    UnknownAccount,
    #[error("unknown transaction")]
    UnknownTransaction,
    #[error("a turn is already in flight for this session")]
    PipelineBusy,
    #[error("{0}")]
    InvalidInput(String),
    #[error("admin credential missing or wrong")]
    AuthFailure,
    #[error("{0}")]
    ParseError(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownSession => "UnknownSession",
            ApiError::UnknownAccount => "UnknownAccount",
            ApiError::UnknownTransaction => "UnknownTransaction",
            ApiError::PipelineBusy => "PipelineBusy",
            ApiError::InvalidInput(_) => "InvalidInput",
            ApiError::AuthFailure => "AuthFailure",
            ApiError::ParseError(_) => "ParseError",
            ApiError::Bank(BankError::TwoFaRequired) => "TwoFaRequired",
            ApiError::Bank(BankError::InvalidState { .. }) => "InvalidState",
            ApiError::Bank(BankError::StaleEdit(_)) => "StaleEdit",
            ApiError::Bank(BankError::Precheck(_)) => "PrecheckFailed",
            ApiError::Bank(BankError::UnknownAccount(_)) => "UnknownAccount",
            ApiError::Bank(BankError::UnknownTransaction(_)) => "UnknownTransaction",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession | ApiError::UnknownAccount | ApiError::UnknownTransaction => StatusCode::NOT_FOUND,
            ApiError::Bank(BankError::UnknownAccount(_) | BankError::UnknownTransaction(_)) => StatusCode::NOT_FOUND,
            ApiError::PipelineBusy | ApiError::Bank(BankError::InvalidState { .. }) => StatusCode::CONFLICT,
            ApiError::InvalidInput(_) | ApiError::ParseError(_) => StatusCode::BAD_REQUEST,
            ApiError::AuthFailure => StatusCode::UNAUTHORIZED,
            ApiError::Bank(BankError::TwoFaRequired) => StatusCode::FORBIDDEN,
            ApiError::Bank(BankError::StaleEdit(_) | BankError::Precheck(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(msg) = &self {
            tracing::error!("{msg}");
        }
        let body = json!({"error": self.code(), "message": self.to_string()});
        (self.status(), Json(body)).into_response()
    }
}
