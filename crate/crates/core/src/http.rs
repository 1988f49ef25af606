//! Minimal blocking JSON-over-HTTP transport shared by the remote decomposer
//! and the remote embedding provider.

use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Posts a JSON body and returns the raw reply text.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer_token: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, TransportError>;
}

/// `ureq`-backed transport. One request per call, no retries.
#[derive(Clone, Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer_token: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, TransportError> {
        let mut request = ureq::post(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(token) = bearer_token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send(body.to_string())
            .map_err(|e| TransportError(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))
    }
}
