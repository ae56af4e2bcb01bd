//! Model-backed learning providers.
//!
//! Each wraps a chat backend behind the corresponding deterministic-provider
//! trait; the role lives in the prompt. Swapping these in changes rule and
//! heuristic wording but never the learning counting invariants.

use super::{ChatBackend, ChatMessage, ChatRequest};
use crate::learning::{
    DistillProvider, DistillRequest, JudgeProvider, JudgmentOutcome, LearningError,
    ReflectionProvider, ReflexionContext,
};
use std::sync::Mutex;

fn run(
    backend: &Mutex<Box<dyn ChatBackend>>,
    system: &str,
    user: String,
) -> Result<String, LearningError> {
    let mut guard = backend
        .lock()
        .map_err(|_| LearningError::ProviderFailure("backend mutex poisoned".into()))?;
    let request = ChatRequest::new(
        vec![ChatMessage::system(system), ChatMessage::user(user)],
        guard.model_id().to_string(),
    );
    guard
        .complete(&request)
        .map_err(|e| LearningError::ProviderFailure(e.to_string()))
}

/// Verifier role: answers MATCH, or DISCREPANCY with a reason.
pub struct ModelJudge {
    backend: Mutex<Box<dyn ChatBackend>>,
}

const JUDGE_SYSTEM: &str = "You verify world-model predictions. Compare the predicted state \
against the actual outcome. If the prediction is consistent with the outcome, reply exactly \
MATCH. Otherwise reply DISCREPANCY: followed by a one-sentence reason.";

impl ModelJudge {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend: Mutex::new(backend),
        }
    }
}

impl JudgeProvider for ModelJudge {
    fn judge(&self, predicted: &str, abstract_after: &str) -> Result<JudgmentOutcome, LearningError> {
        let user = format!("Predicted: {predicted}\nActual: {abstract_after}");
        let text = run(&self.backend, JUDGE_SYSTEM, user)?;
        let trimmed = text.trim();
        if trimmed.to_ascii_lowercase().starts_with("match") {
            Ok(JudgmentOutcome::matched(trimmed.to_string()))
        } else {
            let rationale = trimmed
                .trim_start_matches("DISCREPANCY:")
                .trim_start_matches("discrepancy:")
                .trim();
            let rationale = if rationale.is_empty() { trimmed } else { rationale };
            Ok(JudgmentOutcome::discrepancy(rationale.to_string()))
        }
    }
}

/// Reflexion role: one corrective causal rule per discrepancy.
pub struct ModelReflector {
    backend: Mutex<Box<dyn ChatBackend>>,
}

const REFLECT_SYSTEM: &str = "You analyze an embodied agent's failed state prediction and write \
one corrective causal rule the agent should remember. Reply with the rule sentence only.";

impl ModelReflector {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend: Mutex::new(backend),
        }
    }
}

impl ReflectionProvider for ModelReflector {
    fn reflect(&self, ctx: &ReflexionContext) -> Result<String, LearningError> {
        let mut history = String::new();
        for step in &ctx.history_tail {
            history.push_str(&format!("- {} => {}\n", step.action_name, step.feedback_message));
        }
        let user = format!(
            "Recent steps:\n{}Action: {}\nState before: {}\nPredicted: {}\nActual: {}",
            history,
            ctx.action.full_name(),
            ctx.abstract_before,
            ctx.predicted,
            ctx.abstract_after
        );
        let text = run(&self.backend, REFLECT_SYSTEM, user)?;
        let rule = text.trim().to_string();
        if rule.is_empty() {
            return Err(LearningError::ProviderFailure("empty reflection".into()));
        }
        Ok(rule)
    }
}

/// Distiller role: procedural heuristics from a successful trajectory, one
/// per line.
pub struct ModelDistiller {
    backend: Mutex<Box<dyn ChatBackend>>,
}

const DISTILL_SYSTEM: &str = "You distill procedural heuristics from a successful embodied \
episode. Reply with up to three one-line heuristics, one per line, each referencing the goal \
and the decisive action order.";

impl ModelDistiller {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend: Mutex::new(backend),
        }
    }
}

impl DistillProvider for ModelDistiller {
    fn distill(&self, request: &DistillRequest) -> Result<Vec<String>, LearningError> {
        let mut steps = String::new();
        for step in &request.steps {
            let mark = if step.feedback_ok { "ok" } else { "invalid" };
            steps.push_str(&format!("- {} ({mark})\n", step.action_name));
        }
        let user = format!("Goal: {}\nSteps:\n{steps}", request.instruction);
        let text = run(&self.backend, DISTILL_SYSTEM, user)?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.trim_start_matches("- ").to_string())
            .collect())
    }
}
