//! Deterministic scripted backends for desk-scale tests and fixtures.

use super::{BackendError, ChatBackend, ChatRequest};
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script file error: {0}")]
    Io(String),
    #[error("script schema error: {0}")]
    Schema(String),
}

/// A canned response: either raw text emitted verbatim (useful for malformed
/// payload tests) or a JSON value serialized compactly.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ResponseSpec {
    Raw(String),
    Structured(serde_json::Value),
}

impl ResponseSpec {
    fn render(&self) -> String {
        match self {
            ResponseSpec::Raw(text) => text.clone(),
            ResponseSpec::Structured(value) => {
                serde_json::to_string(value).expect("value serializes")
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RuleSpec {
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    #[serde(default)]
    when_contains: Vec<String>,
    #[serde(default)]
    when_not_contains: Vec<String>,
    respond: ResponseSpec,
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptDoc {
    model_id: String,
    #[serde(default)]
    rules: Vec<RuleSpec>,
    default_response: ResponseSpec,
}

/// Substring-triggered canned responder. The first rule whose
/// `when_contains` substrings all appear in the rendered prompt, and whose
/// `when_not_contains` substrings all do not, wins; otherwise the default
/// response fires, so the backend is total.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    doc: ScriptDoc,
}

impl ScriptedBackend {
    pub fn from_json(json: &str) -> Result<Self, ScriptError> {
        let doc: ScriptDoc =
            serde_json::from_str(json).map_err(|e| ScriptError::Schema(e.to_string()))?;
        Ok(Self { doc })
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScriptError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let prompt = request.rendered();
        for rule in &self.doc.rules {
            let hit = rule.when_contains.iter().all(|s| prompt.contains(s))
                && rule.when_not_contains.iter().all(|s| !prompt.contains(s));
            if hit {
                return Ok(rule.respond.render());
            }
        }
        Ok(self.doc.default_response.render())
    }

    fn model_id(&self) -> &str {
        &self.doc.model_id
    }
}

/// Emits a fixed sequence of responses in order, repeating the last one once
/// exhausted. Handy for exercising the parse-repair loop.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    model_id: String,
    responses: Vec<String>,
    cursor: usize,
}

impl ReplayBackend {
    pub fn new(model_id: impl Into<String>, responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "replay backend needs responses");
        Self {
            model_id: model_id.into(),
            responses,
            cursor: 0,
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, _request: &ChatRequest) -> Result<String, BackendError> {
        let index = self.cursor.min(self.responses.len() - 1);
        self.cursor += 1;
        Ok(self.responses[index].clone())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
