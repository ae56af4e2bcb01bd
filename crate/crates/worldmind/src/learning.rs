//! Process-experience acquisition (judgment and self-reflexion) and
//! goal-experience distillation.
//!
//! Judgment compares the agent's predicted next state against the abstracted
//! actual outcome; a semantic discrepancy marks a physical hallucination and
//! triggers reflexion, which synthesizes one corrective causal rule.
//! Distillation compresses a successful trajectory into procedural
//! heuristics. All three run behind provider traits; the defaults are
//! deterministic and in-process, and model-backed providers can substitute
//! without changing any counting invariant.

use crate::types::{is_skip, ActionSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LearningError {
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("trajectory did not succeed; nothing to distill")]
    NotSuccessful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Match,
    Discrepancy,
    Skipped,
}

/// Outcome of one prediction check. `Skipped` iff the prediction was the skip
/// sentinel; a discrepancy always carries a nonempty rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentOutcome {
    pub verdict: Verdict,
    pub rationale: String,
}

impl JudgmentOutcome {
    pub fn skipped() -> Self {
        Self {
            verdict: Verdict::Skipped,
            rationale: "prediction was skipped".into(),
        }
    }

    pub fn matched(rationale: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Match,
            rationale: rationale.into(),
        }
    }

    pub fn discrepancy(rationale: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Discrepancy,
            rationale: rationale.into(),
        }
    }
}

/// Decides Match vs Discrepancy for a non-skip prediction.
pub trait JudgeProvider {
    fn judge(&self, predicted: &str, abstract_after: &str) -> Result<JudgmentOutcome, LearningError>;
}

/// Synthesizes one corrective causal rule from a discrepancy context.
pub trait ReflectionProvider {
    fn reflect(&self, ctx: &ReflexionContext) -> Result<String, LearningError>;
}

/// Distills procedural heuristics from a successful trajectory.
pub trait DistillProvider {
    fn distill(&self, request: &DistillRequest) -> Result<Vec<String>, LearningError>;
}

/// One recent step, as passed to reflection prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub action_name: String,
    pub feedback_message: String,
}

/// Everything the reflexion module sees: a bounded history tail plus the
/// action, the abstracted before-state, the prediction, and the abstracted
/// outcome. The prediction is never the skip sentinel — skipped steps do not
/// reach reflexion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflexionContext {
    pub history_tail: Vec<HistoryStep>,
    pub action: ActionSpec,
    pub abstract_before: String,
    pub predicted: String,
    pub abstract_after: String,
}

/// Judges one executed step. Skip predictions short-circuit to `Skipped`
/// without consulting the provider. Provider failures propagate; callers
/// treat them as `Match` so judge noise never pollutes the repository.
pub fn judge(
    predicted: &str,
    abstract_after: &str,
    provider: &dyn JudgeProvider,
) -> Result<JudgmentOutcome, LearningError> {
    if is_skip(predicted) {
        return Ok(JudgmentOutcome::skipped());
    }
    provider.judge(predicted, abstract_after)
}

/// Reflects on a discrepancy, yielding one imperative causal rule sentence.
pub fn reflect(
    ctx: &ReflexionContext,
    provider: &dyn ReflectionProvider,
) -> Result<String, LearningError> {
    debug_assert!(!is_skip(&ctx.predicted));
    provider.reflect(ctx)
}

/// Distillation input: the goal instruction, the success flag, and the
/// executed steps in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillRequest {
    pub instruction: String,
    pub success: bool,
    pub steps: Vec<DistillStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillStep {
    /// Full action name, verb plus parameter.
    pub action_name: String,
    /// Verb alone, for undo-pair detection.
    pub verb: String,
    /// Parameter alone.
    pub parameter: String,
    pub feedback_ok: bool,
}

/// Distills at most `cap` heuristics from a successful trajectory.
/// Errors with [`LearningError::NotSuccessful`] when the trajectory failed.
pub fn distill_goals(
    request: &DistillRequest,
    provider: &dyn DistillProvider,
    cap: usize,
) -> Result<Vec<String>, LearningError> {
    if !request.success {
        return Err(LearningError::NotSuccessful);
    }
    let mut heuristics = provider.distill(request)?;
    heuristics.truncate(cap);
    Ok(heuristics)
}

// --- deterministic default providers ---

/// Glue tokens ignored by the token-subset judge. Agent/gripper synonyms are
/// included so "Gripper holds Apple" and "Agent now holds Apple" agree.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am", "to", "of", "in",
    "on", "at", "by", "for", "with", "from", "into", "onto", "and", "or", "it", "its", "this",
    "that", "now", "then", "currently", "will", "would", "has", "have", "had", "agent", "robot",
    "gripper", "hand",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Naive plural stemming: strip a trailing "s" from tokens longer than three
/// characters unless they end in "ss".
fn stem(token: &str) -> String {
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

/// Normalized content-token set: lowercase, punctuation stripped, plurals
/// stemmed, stopwords removed.
pub fn content_tokens(text: &str) -> std::collections::BTreeSet<String> {
    crate::repo::tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

/// Token-subset judge: the prediction matches iff every content token it
/// mentions also appears in the actual outcome. Predictions describing a
/// subset of the actual changes count as matches, so the rule under-triggers
/// by construction and stays invariant to incidental detail.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenSubsetJudge;

impl JudgeProvider for TokenSubsetJudge {
    fn judge(&self, predicted: &str, abstract_after: &str) -> Result<JudgmentOutcome, LearningError> {
        let predicted_tokens = content_tokens(predicted);
        let actual_tokens = content_tokens(abstract_after);
        let missing: Vec<&String> = predicted_tokens.difference(&actual_tokens).collect();
        if missing.is_empty() {
            Ok(JudgmentOutcome::matched(
                "all predicted tokens grounded in actual outcome",
            ))
        } else {
            let listed: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
            Ok(JudgmentOutcome::discrepancy(format!(
                "predicted tokens [{}] absent from actual outcome",
                listed.join(", ")
            )))
        }
    }
}

/// Template reflector. The rule wording is fixed so identical contexts yield
/// identical rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateReflector;

impl ReflectionProvider for TemplateReflector {
    fn reflect(&self, ctx: &ReflexionContext) -> Result<String, LearningError> {
        Ok(format!(
            "When attempting '{}' in state [{}], the outcome was [{}], not [{}]; \
             precondition likely missing — verify before repeating.",
            ctx.action.full_name(),
            ctx.abstract_before,
            ctx.abstract_after,
            ctx.predicted
        ))
    }
}

/// Template distiller: one heuristic naming the goal and the cleaned action
/// order. Noise filters: invalid steps are dropped, immediate pick→drop undo
/// pairs of the same object are removed, and consecutive repeats collapse.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateDistiller;

impl DistillProvider for TemplateDistiller {
    fn distill(&self, request: &DistillRequest) -> Result<Vec<String>, LearningError> {
        let valid: Vec<&DistillStep> = request.steps.iter().filter(|s| s.feedback_ok).collect();

        let mut kept: Vec<&DistillStep> = Vec::new();
        let mut i = 0;
        while i < valid.len() {
            let step = valid[i];
            let is_pick = step.verb == "pick up" || step.verb == "pick";
            if is_pick && i + 1 < valid.len() {
                let next = valid[i + 1];
                if next.verb == "drop" && next.parameter == step.parameter {
                    i += 2;
                    continue;
                }
            }
            kept.push(step);
            i += 1;
        }

        let mut compressed: Vec<&str> = Vec::new();
        for step in kept {
            if compressed.last() != Some(&step.action_name.as_str()) {
                compressed.push(&step.action_name);
            }
        }

        if compressed.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![format!(
            "For goals like '{}': successful action order was {}.",
            request.instruction,
            compressed.join(" -> ")
        )])
    }
}
