use axum::body::Bytes;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use revbridge_core::bridge::{respond, Ack, BridgeRequest, Endpoint, IDEMPOTENCY_HEADER, SIGNATURE_HEADER};
use revbridge_core::Error;
use serde::{Deserialize, Serialize};

/// JSON error body every endpoint answers failures with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            error: self.0.class().to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

/// Runs a service call on the blocking pool; service calls may block on
/// bridge delivery.
pub(crate) async fn blocking<T, F>(f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, Error> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(e)) => ApiError(e).into_response(),
        Err(join) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(ErrorBody {
                error: "Internal".into(),
                message: join.to_string(),
            }),
        )
            .into_response(),
    }
}

pub(crate) fn bearer(headers: &HeaderMap) -> Result<String, Error> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or(Error::Unauthenticated)
}

pub(crate) fn bridge_request(endpoint: Endpoint, headers: &HeaderMap, body: Bytes) -> BridgeRequest {
    let header = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string()
    };
    BridgeRequest {
        endpoint,
        body: body.to_vec(),
        signature: header(SIGNATURE_HEADER),
        idempotency_key: header(IDEMPOTENCY_HEADER),
    }
}

/// Same status and body the in-process loopback would produce.
pub(crate) async fn bridge_reply<F>(f: F) -> Response
where
    F: FnOnce() -> Result<Ack, Error> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(outcome) => {
            let r = respond(outcome);
            let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, Json(r.body)).into_response()
        }
        Err(join) => (StatusCode::INTERNAL_SERVER_ERROR, join.to_string()).into_response(),
    }
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(body).map_err(|e| Error::Invalid(format!("request body: {e}")))
}
