use proptest::prelude::*;
use trust_pomdp::learning::{fit_trust_dynamics, InteractionLog};
use trust_pomdp::pomdp::{belief_update, exact_plan, policy_action, Belief, ExactOptions};
use trust_pomdp::sim::{run_episodes, Agent, HumanTruth};
use trust_pomdp::task::{build_model, default_objects, preset, reference_parameters, ObjectStatus, TaskModel, PRESETS};
use trust_pomdp::trust::{stay_put_probability, success_belief, ObjectCategory, OutcomeClass, OutcomeEvent, TrustLevel};

fn expected(b: &Belief) -> f64 {
    b.expect(|h| (h + 1) as f64)
}

/// Largest drop across a success and largest rise across a failure over
/// every action sequence of length `depth + 1`.
fn direction_extremes(model: &TaskModel, v: usize, b: &Belief, depth: usize, worst: &mut (f64, f64)) {
    if model.is_terminal(v) {
        return;
    }
    for &a in model.enabled_actions(v) {
        let target = model.actions[a].target_object;
        for n in model.visible_successors(v, a) {
            let Ok(nb) = belief_update(model, b, v, a, n) else { continue };
            let d = expected(&nb) - expected(b);
            match model.world(n).statuses[target] {
                ObjectStatus::RemovedRobotSuccess => worst.0 = worst.0.min(d),
                ObjectStatus::RemovedRobotFail => worst.1 = worst.1.max(d),
                _ => {}
            }
            if depth > 0 {
                direction_extremes(model, n, &nb, depth - 1, worst);
            }
        }
    }
}

#[test]
fn expected_trust_follows_outcomes_on_reachable_beliefs() {
    let params = reference_parameters();
    for name in PRESETS {
        let model = build_model(&preset(name, &params).unwrap()).unwrap();
        let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
        direction_extremes(&model, model.initial_visible(), model.initial_belief(), 2, &mut worst);
        assert!(worst.0 >= 0.0, "{name}: success lowered expected trust by {}", -worst.0);
        if name == "failure-scenario" {
            assert!(worst.1 <= 0.0, "{name}: failure raised expected trust by {}", worst.1);
        }
    }
}

#[test]
fn expected_trust_follows_outcomes_along_the_policy() {
    let config = preset("failure-scenario", &reference_parameters()).unwrap();
    let model = build_model(&config).unwrap();
    let policy = exact_plan(&model, ExactOptions::default()).unwrap().policy;
    let mut stack = vec![(model.initial_visible(), model.initial_belief().clone())];
    while let Some((v, b)) = stack.pop() {
        if model.is_terminal(v) {
            continue;
        }
        let a = policy_action(&policy, v, &b).unwrap();
        for n in model.visible_successors(v, a) {
            let nb = belief_update(&model, &b, v, a, n).unwrap();
            match model.world(n).statuses[model.actions[a].target_object] {
                ObjectStatus::RemovedRobotSuccess => assert!(expected(&nb) >= expected(&b)),
                ObjectStatus::RemovedRobotFail => assert!(expected(&nb) <= expected(&b) + 1e-8),
                _ => {}
            }
            stack.push((n, nb));
        }
    }
}

#[test]
fn intervention_orders_glass_can_bottle() {
    let params = reference_parameters();
    let objects = default_objects();
    let stakes = |c: ObjectCategory| objects.iter().find(|o| o.category == c).unwrap().stakes();
    for t in TrustLevel::all() {
        let p = |c| stay_put_probability(&params.behavior, stakes(c), t).unwrap();
        assert!(p(ObjectCategory::Glass) <= p(ObjectCategory::Can), "level {}", t.value());
        assert!(p(ObjectCategory::Can) <= p(ObjectCategory::Bottle), "level {}", t.value());
    }
}

#[test]
fn reference_dynamics_match_described_trends() {
    let d = reference_parameters().trust_dynamics().unwrap();
    for c in ObjectCategory::ALL {
        let s = d.get(OutcomeClass::new(c, OutcomeEvent::StayPutSuccess)).unwrap();
        let f = d.get(OutcomeClass::new(c, OutcomeEvent::StayPutFail)).unwrap();
        let i = d.get(OutcomeClass::new(c, OutcomeEvent::Intervened)).unwrap();
        assert!(s.beta > 0.0 && s.alpha <= 1.0 && s.alpha * 7.0 + s.beta >= 7.0);
        assert!(f.beta < 0.0 && f.alpha < 1.0);
        assert!(i.beta <= 0.0 && i.beta > -0.5 && i.alpha <= 1.0);
    }
    let provenance = reference_parameters().provenance.unwrap_or_default();
    assert!(provenance.starts_with("Derived"));
}

#[test]
fn rollout_logs_feed_the_fitter() {
    let config = preset("always-success", &reference_parameters()).unwrap();
    let model = build_model(&config).unwrap();
    let policy = exact_plan(&model, ExactOptions::default()).unwrap().policy;
    let records = run_episodes(&config, Agent::new(&model, &policy), &HumanTruth::from_config(&config), 200, 8).unwrap();
    let log = InteractionLog::new(records.iter().map(|r| r.to_episode(true)).collect());
    let text = log.to_jsonl();
    let parsed = InteractionLog::from_jsonl(&text).unwrap();
    assert_eq!(parsed, log);
    let report = fit_trust_dynamics(&parsed).unwrap();
    assert_eq!(report.per_class_counts.values().sum::<usize>(), 200 * 5);
}

proptest! {
    #[test]
    fn stay_put_rises_with_trust_under_reference_behavior(cat in 0usize..3, t in 1i64..7) {
        let params = reference_parameters();
        let o = default_objects().into_iter().find(|o| o.category == ObjectCategory::ALL[cat]).unwrap();
        let lo = stay_put_probability(&params.behavior, o.stakes(), TrustLevel::new(t).unwrap()).unwrap();
        let hi = stay_put_probability(&params.behavior, o.stakes(), TrustLevel::new(t + 1).unwrap()).unwrap();
        prop_assert!(hi >= lo);
        let b = success_belief(&params.behavior, o.category, TrustLevel::new(t).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }
}
