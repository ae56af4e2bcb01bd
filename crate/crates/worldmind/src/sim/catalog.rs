//! Action catalog enumeration.
//!
//! The catalog is the full set of (verb, target) pairs legal for a world,
//! with ids assigned in a fixed order so scripted plans stay stable across
//! placements: verbs in profile order, targets in instance order, receptacles
//! before objects where a verb accepts both.

use super::{instance_key, WorldState};
use crate::types::{ActionSpec, Profile};

/// Enumerates every action the profile admits against the world's entities.
/// Ids are contiguous from zero and depend only on the entity names, not on
/// placements or states.
pub fn build_catalog(state: &WorldState) -> Vec<ActionSpec> {
    let mut receptacles: Vec<&String> = state.receptacles.keys().collect();
    receptacles.sort_by_key(|n| instance_key(n));
    let mut objects: Vec<&String> = state.objects.keys().collect();
    objects.sort_by_key(|n| instance_key(n));

    let mut catalog = Vec::new();
    let mut push = |name: &str, parameter: &str| {
        let id = catalog.len();
        catalog.push(ActionSpec::new(id, name, parameter));
    };

    match state.profile {
        Profile::AlfredLike => {
            for r in &receptacles {
                push("find", r);
            }
            for o in &objects {
                push("find", o);
            }
            for o in &objects {
                push("pick up", o);
            }
            for o in &objects {
                push("put down", o);
            }
            for o in &objects {
                push("drop", o);
            }
            for r in &receptacles {
                push("open", r);
            }
            for r in &receptacles {
                push("close", r);
            }
            for o in &objects {
                push("turn on", o);
            }
            for o in &objects {
                push("turn off", o);
            }
            for o in &objects {
                push("slice", o);
            }
        }
        Profile::HabitatLike => {
            for r in &receptacles {
                push("navigation", r);
            }
            for o in &objects {
                push("pick", o);
            }
            for r in &receptacles {
                push("place", r);
            }
            for r in &receptacles {
                push("open", r);
            }
            for r in &receptacles {
                push("close", r);
            }
        }
    }
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::load_world;
    use crate::types::validate_catalog;

    const KITCHEN: &str = r#"{
        "profile": "alfred_like",
        "receptacles": [
            {"name": "CounterTop_1"},
            {"name": "CounterTop_2"},
            {"name": "Fridge_1", "openable": true, "open": false}
        ],
        "objects": [
            {"name": "Apple", "at": "CounterTop_1", "sliceable": true},
            {"name": "Knife", "at": "CounterTop_2"}
        ]
    }"#;

    #[test]
    fn alfred_catalog_layout_is_frozen() {
        let state = load_world(KITCHEN).unwrap();
        let catalog = build_catalog(&state);
        validate_catalog(state.profile, &catalog).unwrap();
        // 5 find + 2 pick up + 2 put down + 2 drop + 3 open + 3 close
        // + 2 turn on + 2 turn off + 2 slice
        assert_eq!(catalog.len(), 23);
        assert_eq!(catalog[0].full_name(), "find CounterTop_1");
        assert_eq!(catalog[1].full_name(), "find CounterTop_2");
        assert_eq!(catalog[2].full_name(), "find Fridge_1");
        assert_eq!(catalog[3].full_name(), "find Apple");
        assert_eq!(catalog[4].full_name(), "find Knife");
        assert_eq!(catalog[5].full_name(), "pick up Apple");
        assert_eq!(catalog[6].full_name(), "pick up Knife");
        assert_eq!(catalog[21].full_name(), "slice Apple");
        assert_eq!(catalog[22].full_name(), "slice Knife");
    }

    #[test]
    fn catalog_depends_on_names_not_placement() {
        let moved = KITCHEN.replace("\"at\": \"CounterTop_1\"", "\"at\": \"Fridge_1\"");
        let a = build_catalog(&load_world(KITCHEN).unwrap());
        let b = build_catalog(&load_world(&moved).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn habitat_catalog_layout() {
        let json = r#"{
            "profile": "habitat_like",
            "receptacles": [{"name": "CounterTop_1"}, {"name": "Sink_1"}],
            "objects": [{"name": "Cup", "at": "CounterTop_1"}]
        }"#;
        let state = load_world(json).unwrap();
        let catalog = build_catalog(&state);
        validate_catalog(state.profile, &catalog).unwrap();
        // 2 navigation + 1 pick + 2 place + 2 open + 2 close
        assert_eq!(catalog.len(), 9);
        assert_eq!(catalog[0].full_name(), "navigation CounterTop_1");
        assert_eq!(catalog[2].full_name(), "pick Cup");
        assert_eq!(catalog[4].full_name(), "place Sink_1");
    }
}
