//! The predict-act-verify episode loop.
//!
//! Each replanning round retrieves experience for the goal, assembles the
//! prompt, asks the policy backend for a joint (action, predicted state)
//! plan, gates ungrounded predictions, executes steps one by one, judges each
//! prediction against the abstracted outcome, and learns: discrepancies
//! synthesize process rules immediately, and successful episodes distill goal
//! heuristics at the end. A plan is abandoned at the first invalid step so
//! the agent replans with the feedback in context.

mod prompts;

pub use prompts::{build_prompt, system_prompt, REPAIR_MESSAGE};

use crate::backends::{
    parse_agent_response, BackendError, ChatBackend, ChatMessage, ChatRequest, ParseError,
};
use crate::learning::{
    distill_goals, judge, reflect, DistillRequest, DistillStep, HistoryStep, JudgmentOutcome,
    LearningError, TemplateDistiller, TemplateReflector, TokenSubsetJudge, Verdict,
};
use crate::repo::{
    EmbeddingProvider, ExperienceEntry, ExperienceKind, HashedBowEmbedder, ProcessContext,
    Repository, Source,
};
use crate::sim::{
    evaluate_goal, observe, step as sim_step, Observation, SimError, StateAbstractor,
    TemplateAbstractor, WorldState,
};
use crate::types::{
    is_skip, validate_catalog, ActionSpec, AgentResponse, CatalogError, Feedback, Goal, PlanStep,
    Profile, SKIP_PREDICTION,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Knobs for one episode. The ablation flags are independent: `use_process`
/// and `use_goal` gate both retrieval and learning for their kind, while
/// `learning_enabled` gates all writes (a frozen evaluation run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub step_budget: u32,
    pub invalid_streak_cap: u32,
    pub retrieval_k: usize,
    pub learning_enabled: bool,
    pub use_process: bool,
    pub use_goal: bool,
    pub profile: Profile,
    pub history_tail_len: usize,
    pub max_goal_heuristics: usize,
    pub max_output_tokens: u32,
    pub request_timeout_ms: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            step_budget: 30,
            invalid_streak_cap: 5,
            retrieval_k: 5,
            learning_enabled: true,
            use_process: true,
            use_goal: true,
            profile: Profile::AlfredLike,
            history_tail_len: 3,
            max_goal_heuristics: 3,
            max_output_tokens: 2048,
            request_timeout_ms: 60_000,
        }
    }
}

/// Number of repair re-prompts after a malformed response before the round
/// counts as an invalid step.
pub const PARSE_REPAIR_RETRIES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The episode ended with every goal condition satisfied (declared via an
    /// empty plan or detected right after a step).
    GoalDeclaredAndMet,
    /// The agent declared done (empty plan) while the goal was unmet.
    GoalDeclaredUnmet,
    /// The step budget ran out.
    Timeout,
    /// Too many consecutive invalid actions.
    InvalidStreak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCategory {
    Success,
    InvalidActions,
    Timeout,
    WrongTermination,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Success => "Success",
            ErrorCategory::InvalidActions => "InvalidActions",
            ErrorCategory::Timeout => "Timeout",
            ErrorCategory::WrongTermination => "WrongTermination",
        }
    }
}

/// Total, mutually exclusive mapping from an episode result to the failure
/// taxonomy (success, physically invalid streak, exhausted budget, premature
/// declaration).
pub fn classify_outcome(result: &EpisodeResult) -> ErrorCategory {
    match result.termination {
        Termination::GoalDeclaredAndMet => ErrorCategory::Success,
        Termination::GoalDeclaredUnmet => ErrorCategory::WrongTermination,
        Termination::Timeout => ErrorCategory::Timeout,
        Termination::InvalidStreak => ErrorCategory::InvalidActions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub sr: bool,
    pub gc: f64,
    pub steps_used: u32,
    pub termination: Termination,
    pub wp_added: u32,
    pub wg_added: u32,
}

/// One executed step with everything the verify phase saw. The stored plan
/// step is the gated one: a prediction forced to skip is recorded skipped,
/// with the flag set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub observation: Observation,
    pub plan_step: PlanStep,
    pub feedback: Feedback,
    pub abstract_before: String,
    pub abstract_after: String,
    pub judgment: JudgmentOutcome,
    pub gating_forced_skip: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// Reflexion provider failures: discrepancies that produced no rule.
    pub reflexion_failures: u32,
}

impl Trajectory {
    /// Line-delimited JSON log, one line per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (t, record) in self.steps.iter().enumerate() {
            let line = serde_json::json!({
                "t": t + 1,
                "action": record.plan_step.action_name,
                "predicted_state": record.plan_step.predicted_state,
                "feedback": record.feedback.render(),
                "judgment": record.judgment.verdict,
                "abstract_before": record.abstract_before,
                "abstract_after": record.abstract_after,
            });
            out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub trajectory: Trajectory,
    pub final_state: WorldState,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(BackendError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("catalog error: {0}")]
    Catalog(#[from] CatalogError),
    #[error("world profile {world} does not match configured profile {config}")]
    ProfileMismatch { world: Profile, config: Profile },
}

/// Provider bundle for the verify-and-learn half of the loop.
pub struct Providers {
    pub embedder: Box<dyn EmbeddingProvider>,
    pub abstractor: Box<dyn StateAbstractor>,
    pub judge: Box<dyn crate::learning::JudgeProvider>,
    pub reflector: Box<dyn crate::learning::ReflectionProvider>,
    pub distiller: Box<dyn crate::learning::DistillProvider>,
}

impl Providers {
    /// The deterministic in-process set.
    pub fn deterministic() -> Self {
        Self {
            embedder: Box::new(HashedBowEmbedder),
            abstractor: Box::new(TemplateAbstractor),
            judge: Box::new(TokenSubsetJudge),
            reflector: Box::new(TemplateReflector),
            distiller: Box::new(TemplateDistiller),
        }
    }
}

impl Default for Providers {
    fn default() -> Self {
        Self::deterministic()
    }
}

/// Annotates a validated plan with grounding: any step whose target entity is
/// neither in the observation (visible objects, visible receptacles, gripper)
/// nor mentioned in a retrieved experience text has its prediction replaced
/// by the skip sentinel. Returns the annotated response and a per-step flag
/// marking forced skips.
pub fn enforce_gating(
    plan: &AgentResponse,
    observation: &Observation,
    retrieved_texts: &[&str],
    catalog: &[ActionSpec],
) -> (AgentResponse, Vec<bool>) {
    let mut annotated = plan.clone();
    let mut forced = vec![false; plan.executable_plan.len()];
    for (i, step) in annotated.executable_plan.iter_mut().enumerate() {
        if is_skip(&step.predicted_state) {
            continue;
        }
        let target = &catalog[step.action_id].parameter;
        if !entity_grounded(target, observation, retrieved_texts) {
            step.predicted_state = SKIP_PREDICTION.to_string();
            forced[i] = true;
        }
    }
    (annotated, forced)
}

fn entity_grounded(target: &str, observation: &Observation, retrieved_texts: &[&str]) -> bool {
    if observation.visible_objects.iter().any(|(o, _)| o == target) {
        return true;
    }
    if observation.visible_receptacles.iter().any(|r| r == target) {
        return true;
    }
    if observation.gripper_view.as_deref() == Some(target) {
        return true;
    }
    retrieved_texts.iter().any(|t| text_mentions(t, target))
}

/// Word-boundary, case-insensitive mention; underscores count as word
/// characters so instance names stay whole tokens.
fn text_mentions(text: &str, entity: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .any(|token| token.eq_ignore_ascii_case(entity))
}

enum RoundError {
    Backend(BackendError),
    ParseExhausted,
}

/// One backend exchange with up to [`PARSE_REPAIR_RETRIES`] repair re-prompts
/// appended after malformed replies.
fn complete_and_parse(
    backend: &mut dyn ChatBackend,
    base_messages: &[ChatMessage],
    catalog: &[ActionSpec],
    config: &EpisodeConfig,
) -> Result<AgentResponse, RoundError> {
    let mut messages = base_messages.to_vec();
    for attempt in 0..=PARSE_REPAIR_RETRIES {
        let mut request = ChatRequest::new(messages.clone(), backend.model_id().to_string());
        request.max_output_tokens = config.max_output_tokens;
        request.timeout_ms = config.request_timeout_ms;
        let raw = backend.complete(&request).map_err(RoundError::Backend)?;
        match parse_agent_response(&raw, catalog) {
            Ok(response) => return Ok(response),
            Err(_e @ ParseError::NotJson(_))
            | Err(_e @ ParseError::MissingField(_))
            | Err(_e @ ParseError::WrongType(_))
            | Err(_e @ ParseError::Invalid(_)) => {
                if attempt == PARSE_REPAIR_RETRIES {
                    return Err(RoundError::ParseExhausted);
                }
                messages.push(ChatMessage::assistant(raw));
                messages.push(ChatMessage::user(REPAIR_MESSAGE));
            }
        }
    }
    unreachable!("loop returns on final attempt")
}

fn history_tail(trajectory: &Trajectory, len: usize) -> Vec<HistoryStep> {
    let start = trajectory.steps.len().saturating_sub(len);
    trajectory.steps[start..]
        .iter()
        .map(|record| HistoryStep {
            action_name: record.plan_step.action_name.clone(),
            feedback_message: record.feedback.render(),
        })
        .collect()
}

/// Runs one full episode against the environment. The repository accumulates
/// process rules as discrepancies surface and goal heuristics on success
/// (subject to the config's learning and ablation flags); retrieval happens
/// once per replanning round.
pub fn run_episode(
    world: WorldState,
    goal: &Goal,
    catalog: &[ActionSpec],
    repository: &mut Repository,
    backend: &mut dyn ChatBackend,
    providers: &Providers,
    config: &EpisodeConfig,
) -> Result<EpisodeOutcome, EngineError> {
    if world.profile != config.profile {
        return Err(EngineError::ProfileMismatch {
            world: world.profile,
            config: config.profile,
        });
    }
    validate_catalog(config.profile, catalog)?;

    let mut state = world;
    let mut trajectory = Trajectory::default();
    let mut steps_used: u32 = 0;
    let mut invalid_streak: u32 = 0;
    let mut wp_added: u32 = 0;
    let mut wg_added: u32 = 0;
    let mut last_feedback: Option<Feedback> = None;

    let termination = 'episode: loop {
        if evaluate_goal(&state, goal)?.sr() {
            break Termination::GoalDeclaredAndMet;
        }
        if steps_used >= config.step_budget {
            break Termination::Timeout;
        }

        // (1) retrieve experience for this round, honoring ablation flags
        let retrieved_wp: Vec<(ExperienceEntry, f64)> = if config.use_process {
            repository.retrieve(
                &goal.instruction,
                ExperienceKind::Process,
                config.retrieval_k,
                providers.embedder.as_ref(),
            )
        } else {
            Vec::new()
        };
        let retrieved_wg: Vec<(ExperienceEntry, f64)> = if config.use_goal {
            repository.retrieve(
                &goal.instruction,
                ExperienceKind::Goal,
                config.retrieval_k,
                providers.embedder.as_ref(),
            )
        } else {
            Vec::new()
        };
        let wp_texts: Vec<&str> = retrieved_wp.iter().map(|(e, _)| e.text.as_str()).collect();
        let wg_texts: Vec<&str> = retrieved_wg.iter().map(|(e, _)| e.text.as_str()).collect();

        // (2) prompt, complete, parse with repairs
        let mut observation = observe(&state);
        observation.last_feedback = last_feedback.clone();
        let tail = history_tail(&trajectory, config.history_tail_len);
        let messages = build_prompt(
            &observation,
            goal,
            &wp_texts,
            &wg_texts,
            &tail,
            config.profile,
            catalog,
        );
        let response = match complete_and_parse(backend, &messages, catalog, config) {
            Ok(response) => response,
            Err(RoundError::Backend(e)) => return Err(EngineError::BackendUnavailable(e)),
            Err(RoundError::ParseExhausted) => {
                invalid_streak += 1;
                if invalid_streak >= config.invalid_streak_cap {
                    break Termination::InvalidStreak;
                }
                continue;
            }
        };

        // (3) an empty plan is the done signal
        if response.executable_plan.is_empty() {
            break if evaluate_goal(&state, goal)?.sr() {
                Termination::GoalDeclaredAndMet
            } else {
                Termination::GoalDeclaredUnmet
            };
        }

        let grounding_texts: Vec<&str> =
            wp_texts.iter().chain(wg_texts.iter()).copied().collect();
        let (annotated, forced) =
            enforce_gating(&response, &observation, &grounding_texts, catalog);

        // (4) execute sequentially, verifying each prediction
        for (plan_step, forced_skip) in annotated.executable_plan.iter().zip(forced) {
            if steps_used >= config.step_budget {
                break 'episode Termination::Timeout;
            }
            let action = &catalog[plan_step.action_id];
            let abstract_before = providers.abstractor.summarize(&state);
            let (next_state, feedback) = sim_step(&state, action);
            steps_used += 1;
            let abstract_after =
                providers
                    .abstractor
                    .abstract_transition(&state, &next_state, action);

            let judgment = if is_skip(&plan_step.predicted_state) {
                JudgmentOutcome::skipped()
            } else {
                match judge(
                    &plan_step.predicted_state,
                    &abstract_after,
                    providers.judge.as_ref(),
                ) {
                    Ok(outcome) => outcome,
                    Err(LearningError::ProviderFailure(reason)) => JudgmentOutcome::matched(
                        format!("judge provider failed ({reason}); defaulting to match"),
                    ),
                    Err(other) => JudgmentOutcome::matched(format!(
                        "judge provider failed ({other}); defaulting to match"
                    )),
                }
            };

            if judgment.verdict == Verdict::Discrepancy
                && config.learning_enabled
                && config.use_process
            {
                let ctx = crate::learning::ReflexionContext {
                    history_tail: history_tail(&trajectory, config.history_tail_len),
                    action: action.clone(),
                    abstract_before: abstract_before.clone(),
                    predicted: plan_step.predicted_state.clone(),
                    abstract_after: abstract_after.clone(),
                };
                match reflect(&ctx, providers.reflector.as_ref()) {
                    Ok(rule_text) => {
                        let context = ProcessContext {
                            action_name: action.full_name(),
                            abstract_before: ctx.abstract_before.clone(),
                            predicted: ctx.predicted.clone(),
                            abstract_after: ctx.abstract_after.clone(),
                        };
                        let source = Source {
                            model_id: backend.model_id().to_string(),
                            task_id: goal.id.clone(),
                            episode_step: steps_used,
                        };
                        match repository.add_process(context, rule_text, source) {
                            Ok(_) => wp_added += 1,
                            Err(_) => trajectory.reflexion_failures += 1,
                        }
                    }
                    Err(_) => trajectory.reflexion_failures += 1,
                }
            }

            let feedback_ok = feedback.ok;
            trajectory.steps.push(StepRecord {
                observation: observation.clone(),
                plan_step: plan_step.clone(),
                feedback: feedback.clone(),
                abstract_before,
                abstract_after,
                judgment,
                gating_forced_skip: forced_skip,
            });
            last_feedback = Some(feedback);
            state = next_state;

            if !feedback_ok {
                invalid_streak += 1;
                if invalid_streak >= config.invalid_streak_cap {
                    break 'episode Termination::InvalidStreak;
                }
                // abandon the rest of this plan and replan with the feedback
                break;
            }
            invalid_streak = 0;
            if evaluate_goal(&state, goal)?.sr() {
                break 'episode Termination::GoalDeclaredAndMet;
            }
        }
    };

    let status = evaluate_goal(&state, goal)?;
    let sr = termination == Termination::GoalDeclaredAndMet;
    debug_assert_eq!(sr, status.sr());

    if sr && config.learning_enabled && config.use_goal {
        let request = DistillRequest {
            instruction: goal.instruction.clone(),
            success: true,
            steps: trajectory
                .steps
                .iter()
                .map(|record| {
                    let action = &catalog[record.plan_step.action_id];
                    DistillStep {
                        action_name: action.full_name(),
                        verb: action.name.clone(),
                        parameter: action.parameter.clone(),
                        feedback_ok: record.feedback.ok,
                    }
                })
                .collect(),
        };
        if let Ok(heuristics) =
            distill_goals(&request, providers.distiller.as_ref(), config.max_goal_heuristics)
        {
            let source = Source {
                model_id: backend.model_id().to_string(),
                task_id: goal.id.clone(),
                episode_step: steps_used,
            };
            if let Ok(ids) = repository.add_goal(&heuristics, source) {
                wg_added = ids.len() as u32;
            }
        }
    }

    let result = EpisodeResult {
        sr,
        gc: status.gc(),
        steps_used,
        termination,
        wp_added,
        wg_added,
    };
    Ok(EpisodeOutcome {
        result,
        trajectory,
        final_state: state,
    })
}
