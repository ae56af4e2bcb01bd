//! Chat-completions wire client.
//!
//! POSTs `{model, messages, temperature, max_tokens}` to
//! `<base>/chat/completions` and reads `choices[0].message.content`.
//! Endpoint and credential come from `WORLDMIND_API_BASE` and
//! `WORLDMIND_API_KEY`. Transient transport failures (connect errors,
//! timeouts, 5xx) retry up to three times with 0.5s/1s/2s backoff; 4xx
//! never retries.

use super::{BackendError, ChatBackend, ChatRequest};
use serde_json::json;
use std::time::Duration;

pub const ENV_API_BASE: &str = "WORLDMIND_API_BASE";
pub const ENV_API_KEY: &str = "WORLDMIND_API_KEY";

const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    /// Parsed Retry-After seconds, when the server sent one.
    pub retry_after: Option<u64>,
}

/// Minimal HTTP surface the wire client needs; stubbed in tests.
pub trait HttpTransport {
    fn post_json(
        &mut self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportFailure>;
}

/// Production transport over a blocking reqwest client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &mut self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportFailure> {
        let mut builder = self.client.post(url).json(body).timeout(timeout);
        if let Some(key) = bearer {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Connect(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        let body = response
            .text()
            .map_err(|e| TransportFailure::Connect(e.to_string()))?;
        Ok(HttpResponse {
            status,
            body,
            retry_after,
        })
    }
}

/// Wire backend over any transport.
pub struct WireBackend<T: HttpTransport> {
    transport: T,
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    retry_delays: Vec<Duration>,
}

impl WireBackend<ReqwestTransport> {
    /// Builds from `WORLDMIND_API_BASE` / `WORLDMIND_API_KEY`.
    pub fn from_env(model_id: impl Into<String>) -> Result<Self, BackendError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| BackendError::Transport(format!("{ENV_API_BASE} not set")))?;
        let api_key = std::env::var(ENV_API_KEY).ok();
        Ok(Self::new(ReqwestTransport::new(), &base, api_key, model_id))
    }
}

impl<T: HttpTransport> WireBackend<T> {
    pub fn new(
        transport: T,
        base_url: &str,
        api_key: Option<String>,
        model_id: impl Into<String>,
    ) -> Self {
        Self {
            transport,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            model_id: model_id.into(),
            retry_delays: vec![
                Duration::from_millis(500),
                Duration::from_millis(1000),
                Duration::from_millis(2000),
            ],
        }
    }

    /// Disables backoff sleeps (stub-transport tests).
    pub fn without_backoff(mut self) -> Self {
        self.retry_delays = vec![Duration::ZERO; MAX_RETRIES];
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn body_for(&self, request: &ChatRequest) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = request
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": match m.role {
                        super::Role::System => "system",
                        super::Role::User => "user",
                        super::Role::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| {
            BackendError::Transport("response missing choices[0].message.content".into())
        })
}

impl<T: HttpTransport> ChatBackend for WireBackend<T> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = self.body_for(request);
        let timeout = Duration::from_millis(request.timeout_ms);
        let mut attempt = 0usize;
        loop {
            let result = self
                .transport
                .post_json(&self.endpoint, self.api_key.as_deref(), &body, timeout);
            let retryable_error = match result {
                Ok(response) => match response.status {
                    200..=299 => return extract_content(&response.body),
                    401 | 403 => return Err(BackendError::AuthFailure),
                    429 => return Err(BackendError::RateLimited(response.retry_after)),
                    status @ 400..=499 => {
                        return Err(BackendError::Transport(format!("http {status}")))
                    }
                    status => BackendError::Transport(format!("http {status}")),
                },
                Err(TransportFailure::Timeout) => BackendError::Timeout,
                Err(TransportFailure::Connect(message)) => BackendError::Transport(message),
            };
            if attempt >= MAX_RETRIES {
                return Err(retryable_error);
            }
            std::thread::sleep(self.retry_delays[attempt.min(self.retry_delays.len() - 1)]);
            attempt += 1;
        }
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
