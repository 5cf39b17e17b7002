mod common;

use slide_core::adversary::{Corruption, CorruptionPlan, StrategySpec, Trigger};
use slide_core::endpoints::Detection;
use slide_core::model::Outcome;
use slide_core::sim::{run, RunMetrics, StopRule};
use slide_core::NodeId;

use common::{adversarial, tolerant};

fn check_common(m: &RunMetrics) {
    assert!(m.violations.is_empty(), "{:?}", m.violations);
    assert!(m.eliminations.iter().all(|e| e.truly_corrupt), "honest node eliminated: {:?}", m.eliminations);
    assert!(m.invariants.max_failures_between_eliminations < m.params.n as u64);
}

#[test]
fn duplication_on_a_cut_vertex_is_caught_by_f2() {
    for seed in 0..3 {
        let sc = adversarial(4, 4, seed, StrategySpec::Duplication { pool_target: 5 }, true);
        let m = run(&sc, tolerant()).unwrap().metrics;
        check_common(&m);
        assert_eq!(m.count(Outcome::F2), 1);
        assert_eq!(m.eliminations.len(), 1);
        assert_eq!(m.eliminations[0].node, NodeId(1));
        assert!(matches!(m.detections[0].detection, Detection::F2 { finding: Some(_), .. }));
    }
}

#[test]
fn uphill_is_caught_by_f2() {
    let sc = adversarial(4, 4, 1, StrategySpec::Uphill, true);
    let m = run(&sc, tolerant()).unwrap().metrics;
    check_common(&m);
    assert_eq!(m.eliminations.first().map(|e| e.node), Some(NodeId(1)));
}

#[test]
fn replacement_is_caught_by_f3() {
    for seed in 0..3 {
        let sc = adversarial(4, 8, seed, StrategySpec::Replacement { h_star: None, budget: None, white_box: false }, true);
        let m = run(&sc, tolerant()).unwrap().metrics;
        check_common(&m);
        assert_eq!(m.count(Outcome::F3), 1);
        assert_eq!(m.eliminations.first().map(|e| e.node), Some(NodeId(1)));
    }
}

/// With χ leaked, replacing within a set keeps every per-set count balanced:
/// nothing is localized, failures accumulate, and no honest node is blamed.
#[test]
fn leaked_sets_defeat_localization_without_framing_anyone() {
    let mut sc = adversarial(4, 8, 2, StrategySpec::Replacement { h_star: None, budget: None, white_box: true }, true);
    sc.cheat_injection = true;
    sc.rounds = 60_000;
    let m = run(&sc, tolerant()).unwrap().metrics;
    assert!(m.violations.is_empty(), "{:?}", m.violations);
    assert!(m.eliminations.is_empty());
    assert!(m.count(Outcome::F3) >= m.params.n);
    assert!(m.detections.iter().all(|d| matches!(d.detection, Detection::F3 { finding: None })));
}

#[test]
fn dropping_node_is_eliminated() {
    let sc = adversarial(4, 4, 3, StrategySpec::Dropping, true);
    let m = run(&sc, tolerant()).unwrap().metrics;
    check_common(&m);
    assert_eq!(m.eliminations.first().map(|e| e.node), Some(NodeId(1)));
}

#[test]
fn height_lying_never_costs_an_honest_node() {
    for seed in 0..3 {
        let sc = adversarial(5, 4, seed, StrategySpec::HeightLying, false);
        let m = run(&sc, tolerant()).unwrap().metrics;
        check_common(&m);
    }
}

#[test]
fn protocol_honest_corruption_changes_nothing() {
    let mut sc = adversarial(5, 4, 4, StrategySpec::ProtocolHonest, false);
    sc.stop = StopRule::Messages;
    let m = run(&sc, tolerant()).unwrap().metrics;
    check_common(&m);
    assert_eq!(m.delivered_messages, 3);
    assert!(m.outcomes().iter().all(|o| *o == Outcome::S1));
}

#[test]
fn complete_graph_routes_around_a_dropper_after_elimination() {
    let mut sc = adversarial(5, 4, 6, StrategySpec::Dropping, false);
    sc.stop = StopRule::Messages;
    let m = run(&sc, tolerant()).unwrap().metrics;
    check_common(&m);
    assert_eq!(m.delivered_messages, 3);
}

#[test]
fn late_corruption_trigger() {
    let mut sc = adversarial(4, 4, 7, StrategySpec::Duplication { pool_target: 5 }, true);
    sc.corruption = CorruptionPlan(vec![Corruption {
        node: NodeId(1),
        strategy: StrategySpec::Duplication { pool_target: 5 },
        trigger: Trigger::AfterOutcome { outcome: Outcome::S1 },
    }]);
    let m = run(&sc, tolerant()).unwrap().metrics;
    check_common(&m);
    assert_eq!(m.outcomes().first(), Some(&Outcome::S1));
    assert_eq!(m.eliminations.first().map(|e| e.node), Some(NodeId(1)));
}
