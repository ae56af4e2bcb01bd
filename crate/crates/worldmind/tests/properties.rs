//! Property tests for the contract invariants.

mod support;

use proptest::prelude::*;
use worldmind::learning::{judge, TokenSubsetJudge, Verdict};
use worldmind::repo::{EmbeddingProvider, HashedBowEmbedder};
use worldmind::types::{
    is_skip, validate_response, ActionSpec, AgentResponse, PlanStep, SKIP_PREDICTION,
};

fn catalog() -> Vec<ActionSpec> {
    vec![
        ActionSpec::new(0, "find", "CounterTop_1"),
        ActionSpec::new(1, "find", "Apple"),
        ActionSpec::new(2, "pick up", "Apple"),
        ActionSpec::new(3, "put down", "Apple"),
        ActionSpec::new(4, "slice", "Apple"),
    ]
}

fn arb_prediction() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => Just(SKIP_PREDICTION.to_string()),
        4 => "[A-Za-z][A-Za-z0-9 _]{0,30}",
        1 => Just("  ".to_string()),
    ]
}

fn arb_step() -> impl Strategy<Value = PlanStep> {
    (0usize..5, arb_prediction()).prop_map(|(id, predicted_state)| {
        let spec = &catalog()[id];
        PlanStep {
            action_id: id,
            action_name: spec.full_name(),
            predicted_state,
        }
    })
}

fn arb_response() -> impl Strategy<Value = AgentResponse> {
    (prop::collection::vec(arb_step(), 0..25), ".{0,20}").prop_map(|(plan, language)| {
        AgentResponse {
            language_plan: language,
            executable_plan: plan,
        }
    })
}

proptest! {
    /// Acceptance iff: length cap holds, no blank prediction, and the skip
    /// set is a suffix of the step indices.
    #[test]
    fn validation_accepts_exactly_suffix_skip_plans(response in arb_response()) {
        let skip_flags: Vec<bool> = response
            .executable_plan
            .iter()
            .map(|s| is_skip(&s.predicted_state))
            .collect();
        let is_suffix = skip_flags
            .iter()
            .zip(skip_flags.iter().skip(1))
            .all(|(a, b)| !a || *b);
        let has_blank = response
            .executable_plan
            .iter()
            .any(|s| s.predicted_state.trim().is_empty());
        let too_long = response.executable_plan.len() > 20;

        let verdict = validate_response(response.clone(), &catalog());
        let should_pass = is_suffix && !has_blank && !too_long;
        prop_assert_eq!(verdict.is_ok(), should_pass);

        if let Ok(validated) = verdict {
            // idempotence and id round-trip
            let again = validate_response(validated.clone(), &catalog()).unwrap();
            prop_assert_eq!(&again, &validated);
            for step in &validated.executable_plan {
                let spec = &catalog()[step.action_id];
                prop_assert!(spec.matches_step_name(&step.action_name));
            }
        }
    }

    /// parse(serialize(r)) is the identity on validated responses.
    #[test]
    fn parse_round_trips_valid_responses(response in arb_response()) {
        if let Ok(valid) = validate_response(response, &catalog()) {
            let text = serde_json::to_string(&valid).unwrap();
            let back = worldmind::backends::parse_agent_response(&text, &catalog()).unwrap();
            prop_assert_eq!(back, valid);
        }
    }

    /// judge(x, x) = Match for every non-skip text.
    #[test]
    fn judge_is_reflexive(text in "[A-Za-z0-9 _.,;']{1,60}") {
        prop_assume!(!is_skip(&text));
        let outcome = judge(&text, &text, &TokenSubsetJudge).unwrap();
        prop_assert_eq!(outcome.verdict, Verdict::Match);
    }

    /// Embeddings are unit vectors, invariant to case and punctuation noise.
    #[test]
    fn embeddings_are_normalized(words in prop::collection::vec("[a-z]{1,8}", 1..8)) {
        let text = words.join(" ");
        let e = HashedBowEmbedder;
        let v = e.embed(&text).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        let shouted = format!("  {}!!", text.to_uppercase());
        let w = e.embed(&shouted).unwrap();
        prop_assert!((v.cosine(&w) - 1.0).abs() < 1e-9);
    }

    /// Cosine similarity of any two embeddings stays within [-1, 1].
    #[test]
    fn cosine_is_bounded(
        a in prop::collection::vec("[a-z]{1,8}", 1..8),
        b in prop::collection::vec("[a-z]{1,8}", 1..8),
    ) {
        let e = HashedBowEmbedder;
        let va = e.embed(&a.join(" ")).unwrap();
        let vb = e.embed(&b.join(" ")).unwrap();
        let c = va.cosine(&vb);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
    }
}
