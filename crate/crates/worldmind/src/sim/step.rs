//! Transition rules for both profiles.
//!
//! Check order is fixed per verb and documented next to each rule; the
//! feedback message table below is part of the environment contract (tests
//! and the independent oracle both rely on it).
//!
//! Message table:
//! - success:            "Last action executed successfully."
//! - unknown entity:     "Invalid action: {name} not present in scene"
//! - profile illegal:    "Invalid action: {verb} not available in this profile"
//! - already holding:    "Invalid action: already holding another object"
//! - not close:          "Invalid action: robot is not close to {name}"
//! - closed receptacle:  "Invalid action: {name} is inside a closed receptacle"
//! - not pickupable:     "Invalid action: {name} cannot be picked up"
//! - on floor:           "Invalid action: {name} is on the floor and cannot be picked up"
//! - empty gripper:      "Invalid action: not holding any object"
//! - wrong held object:  "Invalid action: not holding {name}"
//! - no receptacle:      "Invalid action: no receptacle nearby to put down into"
//! - cannot open/close:  "Invalid action: {name} cannot be opened" / "... closed"
//! - already open/closed:"Invalid action: {name} is already open" / "... closed"
//! - cannot turn on/off: "Invalid action: {name} cannot be turned on" / "... off"
//! - already on/off:     "Invalid action: {name} is already turned on" / "... off"
//! - not sliceable:      "Invalid action: {name} is not sliceable"
//! - already sliced:     "Invalid action: {name} is already sliced"
//! - latent violation:   "Invalid action: cannot {verb} {name} in the current state"

use super::{instance_key, object_in_class, AgentPos, ObjectLocation, WorldState};
use crate::types::{ActionSpec, Feedback};

/// Applies one action. Deterministic; always returns a successor state whose
/// step counter advanced by one. Validity violations leave every other fluent
/// untouched and report the violated rule in-band (latent-rule violations are
/// reported opaquely).
pub fn step(state: &WorldState, action: &ActionSpec) -> (WorldState, Feedback) {
    let mut next = state.clone();
    next.step_count += 1;
    let feedback = apply(&mut next, action);
    if !feedback.ok {
        // invalid actions are strict no-ops apart from the step counter
        debug_assert_eq!(
            {
                let mut check = state.clone();
                check.step_count += 1;
                check
            },
            next
        );
    }
    (next, feedback)
}

fn apply(state: &mut WorldState, action: &ActionSpec) -> Feedback {
    let verb = action.name.as_str();
    if !state.profile.is_legal_action(verb) {
        return Feedback::invalid(format!(
            "Invalid action: {verb} not available in this profile"
        ));
    }
    match verb {
        "find" | "navigation" => do_navigate(state, &action.parameter),
        "pick up" | "pick" => do_pick(state, &action.parameter),
        "put down" => do_put_down(state, &action.parameter),
        "place" => do_place(state, &action.parameter),
        "drop" => do_drop(state, &action.parameter),
        "open" => do_open(state, &action.parameter),
        "close" => do_close(state, &action.parameter),
        "turn on" => do_toggle(state, &action.parameter, true),
        "turn off" => do_toggle(state, &action.parameter, false),
        "slice" => do_slice(state, &action.parameter),
        _ => unreachable!("legal verbs are exhaustive"),
    }
}

fn not_present(name: &str) -> Feedback {
    Feedback::invalid(format!("Invalid action: {name} not present in scene"))
}

fn not_close(name: &str) -> Feedback {
    Feedback::invalid(format!("Invalid action: robot is not close to {name}"))
}

/// True when the agent stands at the receptacle holding this object.
fn agent_close_to_object(state: &WorldState, object: &str) -> bool {
    match (state.receptacle_of(object), &state.agent_at) {
        (Some(rec), AgentPos::At(here)) => rec == here,
        _ => false,
    }
}

fn latent_violation(state: &WorldState, verb: &str) -> bool {
    match state.latent_rule_for(verb) {
        Some(rule) => match (&rule.requires_holding_class, &state.gripper) {
            (Some(class), Some(held)) => !object_in_class(held, class),
            (Some(_), None) => true,
            (None, _) => false,
        },
        None => false,
    }
}

fn latent_feedback(verb: &str, name: &str) -> Feedback {
    Feedback::invalid(format!(
        "Invalid action: cannot {verb} {name} in the current state"
    ))
}

/// Resolution order: exact receptacle, exact object, base-name receptacle
/// family, base-name object family. Object targets resolve to the
/// lowest-indexed receptacle containing any matching instance.
fn do_navigate(state: &mut WorldState, target: &str) -> Feedback {
    if state.receptacles.contains_key(target) {
        state.agent_at = AgentPos::At(target.to_string());
        return Feedback::success();
    }
    if state.objects.contains_key(target) {
        return match state.receptacle_of(target) {
            Some(rec) => {
                state.agent_at = AgentPos::At(rec.to_string());
                Feedback::success()
            }
            None => not_present(target),
        };
    }
    // base-name families, lowest instance first
    let mut family_receptacles: Vec<&String> = state
        .receptacles
        .keys()
        .filter(|name| super::split_instance(name).0 == target)
        .collect();
    family_receptacles.sort_by_key(|name| instance_key(name));
    if let Some(first) = family_receptacles.first() {
        state.agent_at = AgentPos::At(first.to_string());
        return Feedback::success();
    }
    let mut holding_receptacles: Vec<String> = state
        .objects
        .iter()
        .filter(|(name, _)| super::split_instance(name).0 == target)
        .filter_map(|(name, _)| state.receptacle_of(name).map(str::to_string))
        .collect();
    holding_receptacles.sort_by_key(|name| instance_key(name));
    if let Some(first) = holding_receptacles.first() {
        state.agent_at = AgentPos::At(first.clone());
        return Feedback::success();
    }
    not_present(target)
}

/// Check order: unknown, already-holding, floor, proximity, closed
/// receptacle, pickupable, latent. The already-holding check runs before
/// proximity so a full gripper is always reported first.
fn do_pick(state: &mut WorldState, target: &str) -> Feedback {
    if !state.objects.contains_key(target) {
        if state.receptacles.contains_key(target) {
            return Feedback::invalid(format!("Invalid action: {target} cannot be picked up"));
        }
        return not_present(target);
    }
    if state.gripper.is_some() {
        return Feedback::invalid("Invalid action: already holding another object");
    }
    if state.objects[target].location == ObjectLocation::OnFloor {
        return Feedback::invalid(format!(
            "Invalid action: {target} is on the floor and cannot be picked up"
        ));
    }
    if !agent_close_to_object(state, target) {
        let mut feedback = not_close(target);
        if state.emit_hints {
            if let Some(rec) = state.receptacle_of(target) {
                feedback = feedback.with_hint(format!("{target} is in {rec}"));
            }
        }
        return feedback;
    }
    let rec_name = state.receptacle_of(target).expect("close implies resting").to_string();
    let rec = &state.receptacles[&rec_name];
    if rec.openable && !rec.is_open {
        return Feedback::invalid(format!(
            "Invalid action: {target} is inside a closed receptacle"
        ));
    }
    if !state.objects[target].pickupable {
        return Feedback::invalid(format!("Invalid action: {target} cannot be picked up"));
    }
    let verb = if state.profile == crate::types::Profile::AlfredLike {
        "pick up"
    } else {
        "pick"
    };
    if latent_violation(state, verb) {
        return latent_feedback(verb, target);
    }
    state.gripper = Some(target.to_string());
    state.objects.get_mut(target).unwrap().location = ObjectLocation::InGripper;
    Feedback::success()
}

/// Parameter names the held object; it goes into the agent's current
/// receptacle (open or closed — the contract has no visibility clause here).
fn do_put_down(state: &mut WorldState, target: &str) -> Feedback {
    match &state.gripper {
        None => Feedback::invalid("Invalid action: not holding any object"),
        Some(held) if held != target => {
            Feedback::invalid(format!("Invalid action: not holding {target}"))
        }
        Some(_) => match state.agent_at.clone() {
            AgentPos::Start => {
                Feedback::invalid("Invalid action: no receptacle nearby to put down into")
            }
            AgentPos::At(here) => {
                if latent_violation(state, "put down") {
                    return latent_feedback("put down", target);
                }
                state.objects.get_mut(target).unwrap().location =
                    ObjectLocation::InReceptacle(here);
                state.gripper = None;
                Feedback::success()
            }
        },
    }
}

/// Habitat placement: parameter names the destination receptacle.
fn do_place(state: &mut WorldState, target: &str) -> Feedback {
    if !state.receptacles.contains_key(target) {
        return not_present(target);
    }
    let held = match &state.gripper {
        None => return Feedback::invalid("Invalid action: not holding any object"),
        Some(held) => held.clone(),
    };
    if state.agent_at != AgentPos::At(target.to_string()) {
        return not_close(target);
    }
    if latent_violation(state, "place") {
        return latent_feedback("place", target);
    }
    state.objects.get_mut(&held).unwrap().location = ObjectLocation::InReceptacle(target.to_string());
    state.gripper = None;
    Feedback::success()
}

/// Drops the held object on the floor, from where it cannot be recovered.
fn do_drop(state: &mut WorldState, target: &str) -> Feedback {
    match &state.gripper {
        None => Feedback::invalid("Invalid action: not holding any object"),
        Some(held) if held != target => {
            Feedback::invalid(format!("Invalid action: not holding {target}"))
        }
        Some(_) => {
            if latent_violation(state, "drop") {
                return latent_feedback("drop", target);
            }
            state.objects.get_mut(target).unwrap().location = ObjectLocation::OnFloor;
            state.gripper = None;
            Feedback::success()
        }
    }
}

/// Check order: unknown, kind, proximity, openability, current state, latent.
fn do_open(state: &mut WorldState, target: &str) -> Feedback {
    if !state.receptacles.contains_key(target) {
        if state.objects.contains_key(target) {
            return Feedback::invalid(format!("Invalid action: {target} cannot be opened"));
        }
        return not_present(target);
    }
    if state.agent_at != AgentPos::At(target.to_string()) {
        return not_close(target);
    }
    if state.receptacles[target].is_open {
        return Feedback::invalid(format!("Invalid action: {target} is already open"));
    }
    if latent_violation(state, "open") {
        return latent_feedback("open", target);
    }
    state.receptacles.get_mut(target).unwrap().is_open = true;
    Feedback::success()
}

fn do_close(state: &mut WorldState, target: &str) -> Feedback {
    if !state.receptacles.contains_key(target) {
        if state.objects.contains_key(target) {
            return Feedback::invalid(format!("Invalid action: {target} cannot be closed"));
        }
        return not_present(target);
    }
    if state.agent_at != AgentPos::At(target.to_string()) {
        return not_close(target);
    }
    if !state.receptacles[target].openable {
        return Feedback::invalid(format!("Invalid action: {target} cannot be closed"));
    }
    if !state.receptacles[target].is_open {
        return Feedback::invalid(format!("Invalid action: {target} is already closed"));
    }
    if latent_violation(state, "close") {
        return latent_feedback("close", target);
    }
    state.receptacles.get_mut(target).unwrap().is_open = false;
    Feedback::success()
}

/// Check order: unknown, kind, proximity, toggleable, current state, latent.
fn do_toggle(state: &mut WorldState, target: &str, turn_on: bool) -> Feedback {
    let verb = if turn_on { "turn on" } else { "turn off" };
    let direction = if turn_on { "on" } else { "off" };
    if !state.objects.contains_key(target) {
        if state.receptacles.contains_key(target) {
            return Feedback::invalid(format!(
                "Invalid action: {target} cannot be turned {direction}"
            ));
        }
        return not_present(target);
    }
    if !agent_close_to_object(state, target) {
        return not_close(target);
    }
    if !state.objects[target].toggleable {
        return Feedback::invalid(format!(
            "Invalid action: {target} cannot be turned {direction}"
        ));
    }
    if state.objects[target].is_on == turn_on {
        return Feedback::invalid(format!(
            "Invalid action: {target} is already turned {direction}"
        ));
    }
    if latent_violation(state, verb) {
        return latent_feedback(verb, target);
    }
    state.objects.get_mut(target).unwrap().is_on = turn_on;
    Feedback::success()
}

/// Check order: unknown, kind, proximity, sliceable, already sliced, latent.
/// Slicing is monotone; repeat attempts are invalid rather than silent no-ops
/// so a success never yields an empty state delta.
fn do_slice(state: &mut WorldState, target: &str) -> Feedback {
    if !state.objects.contains_key(target) {
        if state.receptacles.contains_key(target) {
            return Feedback::invalid(format!("Invalid action: {target} is not sliceable"));
        }
        return not_present(target);
    }
    if !agent_close_to_object(state, target) {
        return not_close(target);
    }
    if !state.objects[target].sliceable {
        return Feedback::invalid(format!("Invalid action: {target} is not sliceable"));
    }
    if state.objects[target].sliced {
        return Feedback::invalid(format!("Invalid action: {target} is already sliced"));
    }
    if latent_violation(state, "slice") {
        return latent_feedback("slice", target);
    }
    state.objects.get_mut(target).unwrap().sliced = true;
    Feedback::success()
}
