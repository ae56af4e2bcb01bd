//! Shared domain vocabulary: action catalogs, goals, plan steps, agent
//! responses, and environment feedback. No behavior beyond validation.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Sentinel prediction emitted when the target of an action is not grounded
/// in the current observation (exploration phase). Matching is byte-exact
/// after trimming outer whitespace; see [`is_skip`].
pub const SKIP_PREDICTION: &str = "Exploration phase: target not visible, prediction skipped.";

/// The one and only message carried by successful feedback.
pub const SUCCESS_FEEDBACK: &str = "Last action executed successfully.";

/// Hard cap on executable plan length.
pub const MAX_PLAN_LEN: usize = 20;

/// Environment profile. Determines the legal action-name set exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    AlfredLike,
    HabitatLike,
}

impl Profile {
    /// Legal action verbs for this profile, in canonical catalog order.
    pub fn legal_action_names(self) -> &'static [&'static str] {
        match self {
            Profile::AlfredLike => &[
                "find",
                "pick up",
                "put down",
                "drop",
                "open",
                "close",
                "turn on",
                "turn off",
                "slice",
            ],
            Profile::HabitatLike => &["navigation", "pick", "place", "open", "close"],
        }
    }

    pub fn is_legal_action(self, name: &str) -> bool {
        self.legal_action_names().contains(&name)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::AlfredLike => write!(f, "alfred_like"),
            Profile::HabitatLike => write!(f, "habitat_like"),
        }
    }
}

/// One catalog entry: a lowercase verb phrase bound to a target entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: usize,
    /// Lowercase verb phrase, e.g. "pick up".
    pub name: String,
    /// Target entity instance, e.g. "Apple" or "CounterTop_2". Case-significant.
    pub parameter: String,
}

impl ActionSpec {
    pub fn new(id: usize, name: impl Into<String>, parameter: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            parameter: parameter.into(),
        }
    }

    /// Canonical display form: verb followed by parameter.
    pub fn full_name(&self) -> String {
        format!("{} {}", self.name, self.parameter)
    }

    /// Whether a model-supplied action name refers to this entry.
    ///
    /// The verb is matched case-insensitively; the parameter must match
    /// byte-exactly (instance suffixes are case-significant). A single
    /// article ("a", "an", "the") between verb and parameter is tolerated,
    /// matching phrasings like "find a CounterTop_2".
    pub fn matches_step_name(&self, step_name: &str) -> bool {
        let s = step_name.trim();
        if s.len() < self.name.len() {
            return false;
        }
        let (head, tail) = s.split_at(self.name.len());
        if !head.eq_ignore_ascii_case(&self.name) {
            return false;
        }
        if !tail.is_empty() && !tail.starts_with([' ', '\t']) {
            return false;
        }
        let tail = tail.trim_start();
        let tail = strip_leading_article(tail);
        tail == self.parameter
    }
}

fn strip_leading_article(s: &str) -> &str {
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = s.strip_prefix(article) {
            return rest.trim_start();
        }
    }
    s
}

/// Catalog-level validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("action id at position {position} is {found}, expected {position}")]
    NonContiguousId { position: usize, found: usize },
    #[error("action name {0:?} is not legal for the profile")]
    IllegalActionName(String),
    #[error("action {0} has an empty parameter")]
    EmptyParameter(usize),
}

/// Checks a catalog against its profile: ids contiguous from zero, names in
/// the profile's legal set, parameters nonempty.
pub fn validate_catalog(profile: Profile, catalog: &[ActionSpec]) -> Result<(), CatalogError> {
    for (position, spec) in catalog.iter().enumerate() {
        if spec.id != position {
            return Err(CatalogError::NonContiguousId {
                position,
                found: spec.id,
            });
        }
        if !profile.is_legal_action(&spec.name) {
            return Err(CatalogError::IllegalActionName(spec.name.clone()));
        }
        if spec.parameter.is_empty() {
            return Err(CatalogError::EmptyParameter(spec.id));
        }
    }
    Ok(())
}

/// State token used by [`GoalPredicate::ObjectState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateToken {
    On,
    Off,
    Open,
    Closed,
    Sliced,
}

impl fmt::Display for StateToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StateToken::On => "on",
            StateToken::Off => "off",
            StateToken::Open => "open",
            StateToken::Closed => "closed",
            StateToken::Sliced => "sliced",
        };
        write!(f, "{s}")
    }
}

/// One independently evaluable goal condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    /// Object rests inside the named receptacle instance.
    ObjectAtReceptacle { subject: String, target: String },
    /// Entity is in the named state (on/off for objects, open/closed for
    /// receptacles, sliced for objects).
    ObjectState { subject: String, target: StateToken },
    /// Gripper holds exactly this object.
    Holding { subject: String },
    /// Gripper does not hold this object.
    NotHolding { subject: String },
}

impl GoalPredicate {
    pub fn subject(&self) -> &str {
        match self {
            GoalPredicate::ObjectAtReceptacle { subject, .. }
            | GoalPredicate::ObjectState { subject, .. }
            | GoalPredicate::Holding { subject }
            | GoalPredicate::NotHolding { subject } => subject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("goal {0:?} has no conditions")]
    EmptyConditions(String),
    #[error("goal file error: {0}")]
    Io(String),
    #[error("goal schema error: {0}")]
    Schema(String),
}

/// A task: natural-language instruction plus machine-checkable conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub id: String,
    pub instruction: String,
    pub conditions: Vec<GoalPredicate>,
}

impl Goal {
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        conditions: Vec<GoalPredicate>,
    ) -> Result<Self, GoalError> {
        let id = id.into();
        if conditions.is_empty() {
            return Err(GoalError::EmptyConditions(id));
        }
        Ok(Self {
            id,
            instruction: instruction.into(),
            conditions,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, GoalError> {
        let goal: Goal =
            serde_json::from_str(text).map_err(|e| GoalError::Schema(e.to_string()))?;
        if goal.conditions.is_empty() {
            return Err(GoalError::EmptyConditions(goal.id));
        }
        Ok(goal)
    }

    pub fn load(path: &Path) -> Result<Self, GoalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GoalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

/// Opaque reference to a knowledge repository (e.g. a file path or label).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryRef(pub String);

/// The decision-process tuple the engine operates over: profile-scoped action
/// catalog, goal, and a handle to the knowledge repository.
#[derive(Debug, Clone)]
pub struct WkMdp {
    pub state_space_profile: Profile,
    pub action_catalog: Vec<ActionSpec>,
    pub goal: Goal,
    pub repository_ref: RepositoryRef,
}

impl WkMdp {
    pub fn new(
        profile: Profile,
        action_catalog: Vec<ActionSpec>,
        goal: Goal,
        repository_ref: RepositoryRef,
    ) -> Result<Self, CatalogError> {
        validate_catalog(profile, &action_catalog)?;
        Ok(Self {
            state_space_profile: profile,
            action_catalog,
            goal,
            repository_ref,
        })
    }
}

/// One planned action paired with its predicted next state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action_id: usize,
    pub action_name: String,
    pub predicted_state: String,
}

/// Parsed model output: chain-of-thought plus the executable plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AgentResponse {
    pub language_plan: String,
    pub executable_plan: Vec<PlanStep>,
}

/// In-band environment feedback for one executed action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub ok: bool,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl Feedback {
    /// Successful feedback always carries [`SUCCESS_FEEDBACK`] verbatim.
    pub fn success() -> Self {
        Self {
            ok: true,
            message: SUCCESS_FEEDBACK.to_string(),
            hint: None,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            message: message.into(),
            hint: None,
        }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }

    /// Single-line rendering used in prompts and logs.
    pub fn render(&self) -> String {
        match &self.hint {
            Some(hint) => format!("{}; {}", self.message, hint),
            None => self.message.clone(),
        }
    }
}

/// True iff the text equals the skip sentinel byte-for-byte after trimming
/// surrounding whitespace. Case-sensitive by contract.
pub fn is_skip(predicted_state: &str) -> bool {
    predicted_state.trim() == SKIP_PREDICTION
}

/// Response-level validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("step {0}: action_id and action_name disagree with the catalog")]
    IdNameMismatch(usize),
    #[error("plan has {0} steps, limit is {MAX_PLAN_LEN}")]
    PlanTooLong(usize),
    #[error("step {0}: concrete prediction after a skipped one")]
    SkipViolation(usize),
    #[error("step {0}: predicted_state is empty")]
    EmptyPredictedState(usize),
}

/// Checks every plan-step and response invariant; returns the response
/// unchanged iff all hold. Idempotent.
///
/// Checks, in order: plan length cap, id/name agreement against the catalog,
/// nonempty predictions, and the cascading-skip rule (once a step carries the
/// skip sentinel, every later step must carry it verbatim).
pub fn validate_response(
    raw: AgentResponse,
    catalog: &[ActionSpec],
) -> Result<AgentResponse, ValidationError> {
    if raw.executable_plan.len() > MAX_PLAN_LEN {
        return Err(ValidationError::PlanTooLong(raw.executable_plan.len()));
    }
    for (index, step) in raw.executable_plan.iter().enumerate() {
        let spec = catalog
            .get(step.action_id)
            .ok_or(ValidationError::IdNameMismatch(index))?;
        if !spec.matches_step_name(&step.action_name) {
            return Err(ValidationError::IdNameMismatch(index));
        }
        if step.predicted_state.trim().is_empty() {
            return Err(ValidationError::EmptyPredictedState(index));
        }
    }
    let mut skipping = false;
    for (index, step) in raw.executable_plan.iter().enumerate() {
        let skip = is_skip(&step.predicted_state);
        if skipping && !skip {
            return Err(ValidationError::SkipViolation(index));
        }
        skipping = skipping || skip;
    }
    Ok(raw)
}
