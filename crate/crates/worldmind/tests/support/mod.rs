//! Shared test support: an independently written brute-force transition
//! interpreter (the simulator's equivalence oracle), fixture paths, and a
//! tiny seeded RNG for fuzzing.
//!
//! The oracle deliberately shares no logic with the simulator: one flat
//! function, inline precondition chains transcribed from the documented
//! environment contract, its own name-suffix parsing and resolution order.

#![allow(dead_code)]

use std::path::PathBuf;
use worldmind::sim::{AgentPos, ObjectLocation, WorldState};
use worldmind::types::{ActionSpec, Feedback, Profile};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn fixture_text(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).expect("fixture readable")
}

fn inv(msg: String) -> Feedback {
    Feedback::invalid(msg)
}

fn base_and_index(name: &str) -> (String, u32) {
    if let Some(pos) = name.rfind('_') {
        let (head, tail) = name.split_at(pos);
        if let Ok(n) = tail[1..].parse::<u32>() {
            return (head.to_string(), n);
        }
    }
    (name.to_string(), 1)
}

fn holds_class(state: &WorldState, class: &str) -> bool {
    match &state.gripper {
        Some(held) => {
            let (base, _) = base_and_index(held);
            base.to_lowercase().contains(&class.to_lowercase())
        }
        None => false,
    }
}

fn latent_blocks(state: &WorldState, verb: &str) -> bool {
    for rule in &state.latent_rules {
        if rule.action == verb {
            if let Some(class) = &rule.requires_holding_class {
                if !holds_class(state, class) {
                    return true;
                }
            }
        }
    }
    false
}

fn at(state: &WorldState) -> Option<String> {
    match &state.agent_at {
        AgentPos::Start => None,
        AgentPos::At(name) => Some(name.clone()),
    }
}

fn resting_in(state: &WorldState, object: &str) -> Option<String> {
    match &state.objects.get(object)?.location {
        ObjectLocation::InReceptacle(r) => Some(r.clone()),
        _ => None,
    }
}

/// Reference transition function: same contract as the simulator, written
/// flat and from scratch against the documented rule and message tables.
pub fn oracle_step(state: &WorldState, action: &ActionSpec) -> (WorldState, Feedback) {
    let mut s = state.clone();
    s.step_count += 1;
    let verb = action.name.as_str();
    let target = action.parameter.as_str();

    let legal: &[&str] = match state.profile {
        Profile::AlfredLike => &[
            "find", "pick up", "put down", "drop", "open", "close", "turn on", "turn off", "slice",
        ],
        Profile::HabitatLike => &["navigation", "pick", "place", "open", "close"],
    };
    if !legal.contains(&verb) {
        return (
            s,
            inv(format!("Invalid action: {verb} not available in this profile")),
        );
    }

    if verb == "find" || verb == "navigation" {
        if state.receptacles.contains_key(target) {
            s.agent_at = AgentPos::At(target.to_string());
            return (s, Feedback::success());
        }
        if state.objects.contains_key(target) {
            return match resting_in(state, target) {
                Some(rec) => {
                    s.agent_at = AgentPos::At(rec);
                    (s, Feedback::success())
                }
                None => (s, inv(format!("Invalid action: {target} not present in scene"))),
            };
        }
        let mut rec_family: Vec<(String, u32, String)> = state
            .receptacles
            .keys()
            .filter(|n| base_and_index(n).0 == target)
            .map(|n| {
                let (b, i) = base_and_index(n);
                (b, i, n.clone())
            })
            .collect();
        rec_family.sort();
        if let Some((_, _, name)) = rec_family.first() {
            s.agent_at = AgentPos::At(name.clone());
            return (s, Feedback::success());
        }
        let mut obj_recs: Vec<(String, u32, String)> = state
            .objects
            .keys()
            .filter(|n| base_and_index(n).0 == target)
            .filter_map(|n| resting_in(state, n))
            .map(|r| {
                let (b, i) = base_and_index(&r);
                (b, i, r)
            })
            .collect();
        obj_recs.sort();
        if let Some((_, _, rec)) = obj_recs.first() {
            s.agent_at = AgentPos::At(rec.clone());
            return (s, Feedback::success());
        }
        return (s, inv(format!("Invalid action: {target} not present in scene")));
    }

    if verb == "pick up" || verb == "pick" {
        if !state.objects.contains_key(target) {
            if state.receptacles.contains_key(target) {
                return (s, inv(format!("Invalid action: {target} cannot be picked up")));
            }
            return (s, inv(format!("Invalid action: {target} not present in scene")));
        }
        if state.gripper.is_some() {
            return (s, inv("Invalid action: already holding another object".into()));
        }
        if state.objects[target].location == ObjectLocation::OnFloor {
            return (
                s,
                inv(format!(
                    "Invalid action: {target} is on the floor and cannot be picked up"
                )),
            );
        }
        let here = at(state);
        let rest = resting_in(state, target);
        if here.is_none() || rest.is_none() || here != rest {
            let mut fb = inv(format!("Invalid action: robot is not close to {target}"));
            if state.emit_hints {
                if let Some(rec) = rest {
                    fb = fb.with_hint(format!("{target} is in {rec}"));
                }
            }
            return (s, fb);
        }
        let rec = &state.receptacles[&rest.unwrap()];
        if rec.openable && !rec.is_open {
            return (
                s,
                inv(format!("Invalid action: {target} is inside a closed receptacle")),
            );
        }
        if !state.objects[target].pickupable {
            return (s, inv(format!("Invalid action: {target} cannot be picked up")));
        }
        if latent_blocks(state, verb) {
            return (
                s,
                inv(format!("Invalid action: cannot {verb} {target} in the current state")),
            );
        }
        s.gripper = Some(target.to_string());
        s.objects.get_mut(target).unwrap().location = ObjectLocation::InGripper;
        return (s, Feedback::success());
    }

    if verb == "put down" || verb == "drop" {
        match &state.gripper {
            None => return (s, inv("Invalid action: not holding any object".into())),
            Some(held) if held != target => {
                return (s, inv(format!("Invalid action: not holding {target}")))
            }
            Some(_) => {}
        }
        if verb == "drop" {
            if latent_blocks(state, "drop") {
                return (
                    s,
                    inv(format!("Invalid action: cannot drop {target} in the current state")),
                );
            }
            s.objects.get_mut(target).unwrap().location = ObjectLocation::OnFloor;
            s.gripper = None;
            return (s, Feedback::success());
        }
        match at(state) {
            None => {
                return (
                    s,
                    inv("Invalid action: no receptacle nearby to put down into".into()),
                )
            }
            Some(here) => {
                if latent_blocks(state, "put down") {
                    return (
                        s,
                        inv(format!(
                            "Invalid action: cannot put down {target} in the current state"
                        )),
                    );
                }
                s.objects.get_mut(target).unwrap().location = ObjectLocation::InReceptacle(here);
                s.gripper = None;
                return (s, Feedback::success());
            }
        }
    }

    if verb == "place" {
        if !state.receptacles.contains_key(target) {
            return (s, inv(format!("Invalid action: {target} not present in scene")));
        }
        let held = match &state.gripper {
            None => return (s, inv("Invalid action: not holding any object".into())),
            Some(h) => h.clone(),
        };
        if at(state).as_deref() != Some(target) {
            return (s, inv(format!("Invalid action: robot is not close to {target}")));
        }
        if latent_blocks(state, "place") {
            return (
                s,
                inv(format!("Invalid action: cannot place {target} in the current state")),
            );
        }
        s.objects.get_mut(&held).unwrap().location =
            ObjectLocation::InReceptacle(target.to_string());
        s.gripper = None;
        return (s, Feedback::success());
    }

    if verb == "open" || verb == "close" {
        if !state.receptacles.contains_key(target) {
            if state.objects.contains_key(target) {
                let word = if verb == "open" { "opened" } else { "closed" };
                return (s, inv(format!("Invalid action: {target} cannot be {word}")));
            }
            return (s, inv(format!("Invalid action: {target} not present in scene")));
        }
        if at(state).as_deref() != Some(target) {
            return (s, inv(format!("Invalid action: robot is not close to {target}")));
        }
        let rec = &state.receptacles[target];
        if verb == "open" {
            if rec.is_open {
                return (s, inv(format!("Invalid action: {target} is already open")));
            }
            if latent_blocks(state, "open") {
                return (
                    s,
                    inv(format!("Invalid action: cannot open {target} in the current state")),
                );
            }
            s.receptacles.get_mut(target).unwrap().is_open = true;
            return (s, Feedback::success());
        }
        if !rec.openable {
            return (s, inv(format!("Invalid action: {target} cannot be closed")));
        }
        if !rec.is_open {
            return (s, inv(format!("Invalid action: {target} is already closed")));
        }
        if latent_blocks(state, "close") {
            return (
                s,
                inv(format!("Invalid action: cannot close {target} in the current state")),
            );
        }
        s.receptacles.get_mut(target).unwrap().is_open = false;
        return (s, Feedback::success());
    }

    if verb == "turn on" || verb == "turn off" {
        let dir = if verb == "turn on" { "on" } else { "off" };
        if !state.objects.contains_key(target) {
            if state.receptacles.contains_key(target) {
                return (
                    s,
                    inv(format!("Invalid action: {target} cannot be turned {dir}")),
                );
            }
            return (s, inv(format!("Invalid action: {target} not present in scene")));
        }
        let here = at(state);
        let rest = resting_in(state, target);
        if here.is_none() || rest.is_none() || here != rest {
            return (s, inv(format!("Invalid action: robot is not close to {target}")));
        }
        let obj = &state.objects[target];
        if !obj.toggleable {
            return (
                s,
                inv(format!("Invalid action: {target} cannot be turned {dir}")),
            );
        }
        let want_on = verb == "turn on";
        if obj.is_on == want_on {
            return (
                s,
                inv(format!("Invalid action: {target} is already turned {dir}")),
            );
        }
        if latent_blocks(state, verb) {
            return (
                s,
                inv(format!("Invalid action: cannot {verb} {target} in the current state")),
            );
        }
        s.objects.get_mut(target).unwrap().is_on = want_on;
        return (s, Feedback::success());
    }

    // slice
    if !state.objects.contains_key(target) {
        if state.receptacles.contains_key(target) {
            return (s, inv(format!("Invalid action: {target} is not sliceable")));
        }
        return (s, inv(format!("Invalid action: {target} not present in scene")));
    }
    let here = at(state);
    let rest = resting_in(state, target);
    if here.is_none() || rest.is_none() || here != rest {
        return (s, inv(format!("Invalid action: robot is not close to {target}")));
    }
    let obj = &state.objects[target];
    if !obj.sliceable {
        return (s, inv(format!("Invalid action: {target} is not sliceable")));
    }
    if obj.sliced {
        return (s, inv(format!("Invalid action: {target} is already sliced")));
    }
    if latent_blocks(state, "slice") {
        return (
            s,
            inv(format!("Invalid action: cannot slice {target} in the current state")),
        );
    }
    s.objects.get_mut(target).unwrap().sliced = true;
    (s, Feedback::success())
}

/// Identity of a state's fluents (everything but the step counter and seed).
pub fn fluent_key(state: &WorldState) -> String {
    let mut normalized = state.clone();
    normalized.step_count = 0;
    normalized.rng_seed = 0;
    normalized.digest()
}
