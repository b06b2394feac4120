use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{Attempt, ModelConfig, TokenBucket, TransportError};
use crate::slots::Slots;

pub(crate) struct HttpChat {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
    in_flight: Slots,
    pacing: Option<TokenBucket>,
}

impl HttpChat {
    pub fn new(
        endpoint: &str,
        api_key_env: Option<&str>,
        max_in_flight: usize,
        requests_per_second: Option<f64>,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let token = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                TransportError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        if max_in_flight == 0 {
            return Err(TransportError::Config("max_in_flight must be >= 1".into()));
        }
        let pacing = match requests_per_second {
            Some(r) if r > 0.0 && r.is_finite() => Some(TokenBucket::new(r, 1)),
            Some(r) => return Err(TransportError::Config(format!("requests_per_second must be positive, got {r}"))),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            token,
            in_flight: Slots::new(max_in_flight),
            pacing,
        })
    }

    pub fn send(&self, config: &ModelConfig, prompt: &str) -> Attempt {
        let _slot = self.in_flight.acquire();
        if let Some(bucket) = &self.pacing {
            bucket.acquire();
        }
        let mut request = self.client.post(&self.endpoint).json(&request_body(config, prompt));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        let body = match response.text() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fail(format!("HTTP {status}: {}", truncate(&body, 500)));
        }
        let parsed: Value = match serde_json::from_str(&body) {
            Ok(v) => v,
            Err(e) => return Attempt::Fail(format!("response is not JSON: {e}")),
        };
        let Some(text) = parsed
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
        else {
            return Attempt::Fail("response lacks choices[0].message.content".into());
        };
        let mut meta = Map::new();
        meta.insert("http_status".into(), json!(status.as_u16()));
        for key in ["id", "model", "usage"] {
            if let Some(v) = parsed.get(key) {
                meta.insert(key.into(), v.clone());
            }
        }
        if let Some(reason) = parsed.pointer("/choices/0/finish_reason") {
            meta.insert("finish_reason".into(), reason.clone());
        }
        Attempt::Done(text.to_string(), meta)
    }
}

/// Chat-completion body: one user message, no system prompt or history.
pub(crate) fn request_body(config: &ModelConfig, prompt: &str) -> Value {
    let mut body = json!({
        "model": config.model_name,
        "messages": [{ "role": "user", "content": prompt }],
        "max_tokens": config.max_tokens,
    });
    if let Some(t) = config.temperature.value() {
        body["temperature"] = json!(t);
    }
    body
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
