//! Status codes and JSON error bodies shared by the services.

use serde::Serialize;

use crate::protocol::ErrorBody;
use crate::transport::WireResponse;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                message: message.into(),
                fields: Vec::new(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "bad_request", message)
    }

    pub fn invalid_fields(code: &str, fields: Vec<String>) -> Self {
        let mut err = Self::new(400, code, format!("invalid fields: {}", fields.join(", ")));
        err.body.fields = fields;
        err
    }

    pub fn not_found(path: &str) -> Self {
        Self::new(404, "not_found", format!("no route for {path}"))
    }

    pub fn method_not_allowed(path: &str) -> Self {
        Self::new(405, "method_not_allowed", format!("method not allowed on {path}"))
    }

    pub fn unavailable(code: &str, message: impl Into<String>) -> Self {
        Self::new(503, code, message)
    }

    pub fn into_wire(self) -> WireResponse {
        WireResponse::json(self.status, serde_json::to_vec(&self.body).expect("error body serializes"))
    }
}

pub fn ok_json<T: Serialize>(value: &T) -> WireResponse {
    WireResponse::json(200, serde_json::to_vec(value).expect("response serializes"))
}

/// Parses a JSON request body; unknown fields are ignored, missing or
/// mistyped required fields yield 400.
pub fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}
