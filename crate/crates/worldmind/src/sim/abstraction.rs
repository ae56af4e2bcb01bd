//! High-level state descriptions.
//!
//! The transition abstractor renders the fluent delta between two states as
//! canonical English; the state summarizer renders a one-line snapshot of
//! where the agent is and what it holds. Both are deterministic templates. A
//! model-backed abstractor can replace them behind [`StateAbstractor`].
//!
//! Template contract (fragments joined with "; ", terminated with "."):
//! 1. gripper: "Agent now holds {O}" / "Agent no longer holds {O}"
//! 2. object moves, in object-name order: "{O} removed from {R}" (into
//!    gripper), "{O} placed in {R}" (out of gripper), "{O} dropped on the
//!    floor", "{O} moved from {R1} to {R2}"
//! 3. agent: "Agent moved to {R}"
//! 4. open/close, receptacle-name order: "{R} is now open" / "{R} is now closed"
//! 5. power, object-name order: "{O} is now turned on" / "{O} is now turned off"
//! 6. slicing, object-name order: "{O} is now sliced"
//!
//! No fluent delta renders as exactly [`NO_CHANGE`]. The step counter and
//! seed are bookkeeping, not fluents.

use super::{AgentPos, ObjectLocation, WorldState};
use crate::types::ActionSpec;

/// Rendering of an empty delta.
pub const NO_CHANGE: &str = "No change in environment state.";

/// Pluggable state abstraction: transition deltas and state snapshots.
pub trait StateAbstractor {
    /// Canonical description of what changed between two states under the
    /// given action.
    fn abstract_transition(
        &self,
        before: &WorldState,
        after: &WorldState,
        action: &ActionSpec,
    ) -> String;

    /// One-line snapshot of the state (agent pose, gripper, visible objects).
    fn summarize(&self, state: &WorldState) -> String;
}

/// The built-in deterministic template abstractor.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateAbstractor;

impl StateAbstractor for TemplateAbstractor {
    fn abstract_transition(
        &self,
        before: &WorldState,
        after: &WorldState,
        _action: &ActionSpec,
    ) -> String {
        let mut fragments: Vec<String> = Vec::new();

        match (&before.gripper, &after.gripper) {
            (None, Some(obj)) => fragments.push(format!("Agent now holds {obj}")),
            (Some(obj), None) => fragments.push(format!("Agent no longer holds {obj}")),
            _ => {}
        }

        for (name, obj_after) in &after.objects {
            let obj_before = match before.objects.get(name) {
                Some(o) => o,
                None => continue,
            };
            if obj_before.location == obj_after.location {
                continue;
            }
            match (&obj_before.location, &obj_after.location) {
                (ObjectLocation::InReceptacle(from), ObjectLocation::InGripper) => {
                    fragments.push(format!("{name} removed from {from}"))
                }
                (ObjectLocation::InGripper, ObjectLocation::InReceptacle(to)) => {
                    fragments.push(format!("{name} placed in {to}"))
                }
                (_, ObjectLocation::OnFloor) => {
                    fragments.push(format!("{name} dropped on the floor"))
                }
                (ObjectLocation::InReceptacle(from), ObjectLocation::InReceptacle(to)) => {
                    fragments.push(format!("{name} moved from {from} to {to}"))
                }
                (ObjectLocation::OnFloor, ObjectLocation::InGripper) => {
                    fragments.push(format!("{name} removed from the floor"))
                }
                (ObjectLocation::OnFloor, ObjectLocation::InReceptacle(to)) => {
                    fragments.push(format!("{name} placed in {to}"))
                }
                (ObjectLocation::InGripper, ObjectLocation::InGripper) => unreachable!(),
            }
        }

        if before.agent_at != after.agent_at {
            if let AgentPos::At(here) = &after.agent_at {
                fragments.push(format!("Agent moved to {here}"));
            }
        }

        for (name, rec_after) in &after.receptacles {
            if let Some(rec_before) = before.receptacles.get(name) {
                if rec_before.is_open != rec_after.is_open {
                    let word = if rec_after.is_open { "open" } else { "closed" };
                    fragments.push(format!("{name} is now {word}"));
                }
            }
        }

        for (name, obj_after) in &after.objects {
            if let Some(obj_before) = before.objects.get(name) {
                if obj_before.is_on != obj_after.is_on {
                    let word = if obj_after.is_on { "on" } else { "off" };
                    fragments.push(format!("{name} is now turned {word}"));
                }
            }
        }

        for (name, obj_after) in &after.objects {
            if let Some(obj_before) = before.objects.get(name) {
                if !obj_before.sliced && obj_after.sliced {
                    fragments.push(format!("{name} is now sliced"));
                }
            }
        }

        if fragments.is_empty() {
            NO_CHANGE.to_string()
        } else {
            format!("{}.", fragments.join("; "))
        }
    }

    fn summarize(&self, state: &WorldState) -> String {
        let location = state.agent_at.render();
        let gripper = match &state.gripper {
            Some(obj) => format!("holding {obj}"),
            None => "gripper empty".to_string(),
        };
        let obs = super::observe(state);
        let visible = if obs.visible_objects.is_empty() {
            "nothing in view".to_string()
        } else {
            let items: Vec<String> = obs
                .visible_objects
                .iter()
                .map(|(obj, rec)| format!("{obj} in {rec}"))
                .collect();
            format!("visible: {}", items.join(", "))
        };
        format!("Agent at {location}; {gripper}; {visible}.")
    }
}

/// Convenience wrapper over the default template abstractor.
pub fn abstract_state(before: &WorldState, after: &WorldState, action: &ActionSpec) -> String {
    TemplateAbstractor.abstract_transition(before, after, action)
}
