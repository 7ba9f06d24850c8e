use std::fmt;

use fedeval_core::api::{ErrorBody, ErrorDetail};

/// An API failure: a SCREAMING_SNAKE code, a message and optional defect
/// list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub details: Vec<String>,
}

impl ApiError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    pub fn unauthenticated() -> Self {
        Self::new("UNAUTHENTICATED", "missing or unknown bearer token")
    }

    pub fn forbidden(why: impl Into<String>) -> Self {
        Self::new("FORBIDDEN", why)
    }

    pub fn status(&self) -> u16 {
        status_for(self.code)
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: ErrorDetail {
                code: self.code.to_owned(),
                message: self.message.clone(),
                details: self.details.clone(),
            },
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

/// HTTP status for an error code.
pub fn status_for(code: &str) -> u16 {
    match code {
        "UNAUTHENTICATED" => 401,
        "FORBIDDEN" | "NOT_ALLOWLISTED" => 403,
        c if c.starts_with("UNKNOWN_") || c == "NOT_FOUND" => 404,
        c if c.starts_with("DUPLICATE_")
            || c == "ILLEGAL_TRANSITION"
            || c == "BENCHMARK_NOT_OPERATIONAL" =>
        {
            409
        }
        "STORAGE_ERROR" => 500,
        _ => 422,
    }
}
