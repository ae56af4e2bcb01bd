//! Backend contract for every model role.
//!
//! One chat-completion surface serves the policy model and the
//! abstraction/judge/reflection/distillation providers; the role lives
//! entirely in the prompt. Tests run against the deterministic
//! [`ScriptedBackend`]; real models go through the [`wire`] client.

mod parse;
mod providers;
mod scripted;
mod wire;

pub use parse::{parse_agent_response, ParseError};
pub use providers::{ModelDistiller, ModelJudge, ModelReflector};
pub use scripted::{ReplayBackend, ScriptedBackend};
pub use wire::{HttpResponse, HttpTransport, ReqwestTransport, TransportFailure, WireBackend};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One completion request. Temperature defaults to zero for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_ms: u64,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, model_id: impl Into<String>) -> Self {
        debug_assert!(!messages.is_empty());
        Self {
            messages,
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: 2048,
            timeout_ms: 60_000,
        }
    }

    /// Every message body joined in order; scripted triggers match on this.
    pub fn rendered(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited{}", .0.map(|s| format!(", retry after {s}s")).unwrap_or_default())]
    RateLimited(Option<u64>),
    #[error("authentication failure")]
    AuthFailure,
    #[error("request timed out")]
    Timeout,
}

/// The uniform completion surface. `&mut self` because scripted backends may
/// carry replay state.
pub trait ChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError>;
    fn model_id(&self) -> &str;
}
