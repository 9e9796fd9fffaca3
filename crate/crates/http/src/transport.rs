use std::time::Duration;

use revbridge_core::bridge::{
    BridgeRequest, BridgeResponse, Transport, TransportFailure, IDEMPOTENCY_HEADER,
    SIGNATURE_HEADER,
};
use serde_json::Value;

/// Bridge transport over HTTP. Must be used from blocking threads.
pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Result<Self, reqwest::Error> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()?,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &BridgeRequest) -> Result<BridgeResponse, TransportFailure> {
        let url = format!("{}{}", self.base_url, request.endpoint.path());
        let response = self
            .client
            .post(&url)
            .header("content-type", "application/json")
            .header(SIGNATURE_HEADER, &request.signature)
            .header(IDEMPOTENCY_HEADER, &request.idempotency_key)
            .body(request.body.clone())
            .send()
            .map_err(|e| TransportFailure(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        let bytes = response
            .bytes()
            .map_err(|e| TransportFailure(format!("{url}: {e}")))?;
        let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Ok(BridgeResponse { status, body })
    }
}
