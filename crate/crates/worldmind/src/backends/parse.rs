//! Strict parsing of model output into [`AgentResponse`].
//!
//! The only repairs attempted here are code-fence stripping and taking the
//! first balanced `{...}` block (models wrap payloads despite the prompt's
//! prohibition). Anything deeper is the engine's re-prompt loop, which keeps
//! parser behavior auditable. Unknown fields are ignored.

use crate::types::{validate_response, ActionSpec, AgentResponse, PlanStep, ValidationError};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("not json: {0}")]
    NotJson(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("wrong type at {0}")]
    WrongType(String),
    #[error("invalid response: {0}")]
    Invalid(#[from] ValidationError),
}

/// Parses raw model text, maps fields strictly, then validates against the
/// catalog.
pub fn parse_agent_response(raw: &str, catalog: &[ActionSpec]) -> Result<AgentResponse, ParseError> {
    let stripped = strip_fences(raw);
    let candidate = first_balanced_object(stripped)
        .ok_or_else(|| ParseError::NotJson("no balanced JSON object found".into()))?;
    let value: Value =
        serde_json::from_str(candidate).map_err(|e| ParseError::NotJson(e.to_string()))?;
    let root = value
        .as_object()
        .ok_or_else(|| ParseError::WrongType("$".into()))?;

    let language_plan = match root.get("language_plan") {
        None => return Err(ParseError::MissingField("language_plan".into())),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ParseError::WrongType("language_plan".into())),
    };

    let plan_value = match root.get("executable_plan") {
        None => return Err(ParseError::MissingField("executable_plan".into())),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(ParseError::WrongType("executable_plan".into())),
    };

    let mut executable_plan = Vec::with_capacity(plan_value.len());
    for (i, item) in plan_value.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| ParseError::WrongType(format!("executable_plan[{i}]")))?;
        let action_id = match obj.get("action_id") {
            None => {
                return Err(ParseError::MissingField(format!(
                    "executable_plan[{i}].action_id"
                )))
            }
            Some(v) => v
                .as_u64()
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| ParseError::WrongType(format!("executable_plan[{i}].action_id")))?,
        };
        let action_name = match obj.get("action_name") {
            None => {
                return Err(ParseError::MissingField(format!(
                    "executable_plan[{i}].action_name"
                )))
            }
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(ParseError::WrongType(format!(
                    "executable_plan[{i}].action_name"
                )))
            }
        };
        let predicted_state = match obj.get("predicted_state") {
            None => {
                return Err(ParseError::MissingField(format!(
                    "executable_plan[{i}].predicted_state"
                )))
            }
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(ParseError::WrongType(format!(
                    "executable_plan[{i}].predicted_state"
                )))
            }
        };
        executable_plan.push(PlanStep {
            action_id,
            action_name,
            predicted_state,
        });
    }

    let response = AgentResponse {
        language_plan,
        executable_plan,
    };
    Ok(validate_response(response, catalog)?)
}

/// Drops a leading ```-fence line (with or without a language tag) and a
/// trailing ``` fence.
fn strip_fences(raw: &str) -> &str {
    let mut text = raw.trim();
    if text.starts_with("```") {
        match text.find('\n') {
            Some(nl) => text = text[nl + 1..].trim(),
            None => return "",
        }
    }
    if text.ends_with("```") {
        if let Some(pos) = text.rfind("```") {
            text = text[..pos].trim();
        }
    }
    text
}

/// The first `{`-to-matching-`}` slice, respecting JSON string literals and
/// escapes. Returns `None` when no brace opens or the first object never
/// balances.
fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}
