use std::time::Duration;

use lanebench_core::expert::QaPair;
use lanebench_core::policy::{Policy, PolicyError, PolicyRequest, PolicyResponse};
use serde_json::Value;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// A policy behind `POST /infer`. Safe to clone across episodes.
#[derive(Debug, Clone)]
pub struct HttpPolicy {
    endpoint: String,
    client: reqwest::blocking::Client,
    model_id: String,
}

fn transport(e: reqwest::Error) -> PolicyError {
    if e.is_timeout() {
        PolicyError::Transport(format!("timed out: {e}"))
    } else {
        PolicyError::Transport(e.to_string())
    }
}

impl HttpPolicy {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, PolicyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        Ok(Self { endpoint: endpoint.trim_end_matches('/').to_string(), client, model_id: "remote".into() })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// `GET /health`; remembers the reported model id as this policy's name.
    pub fn probe(&mut self) -> Result<String, PolicyError> {
        let resp = self.client.get(format!("{}/health", self.endpoint)).send().map_err(transport)?;
        if !resp.status().is_success() {
            return Err(PolicyError::Protocol(format!("health: status {}", resp.status())));
        }
        let v: Value = resp.json().map_err(|e| PolicyError::Protocol(format!("health body: {e}")))?;
        let id = v.get("model_id").and_then(Value::as_str).unwrap_or("remote").to_string();
        self.model_id = id.clone();
        Ok(id)
    }

    pub fn call(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let resp = self
            .client
            .post(format!("{}/infer", self.endpoint))
            .json(request)
            .send()
            .map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(PolicyError::Protocol(format!("status {}: {}", status.as_u16(), body.trim())));
        }
        let body = resp.bytes().map_err(transport)?;
        serde_json::from_slice(&body).map_err(|e| PolicyError::Protocol(format!("response body: {e}")))
    }
}

impl Policy for HttpPolicy {
    fn name(&self) -> &str {
        &self.model_id
    }

    fn answer(&mut self, request: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        Ok(self.call(request)?.answer)
    }
}
