#![allow(dead_code)]

use slide_core::adversary::{Corruption, CorruptionPlan, StrategySpec, Trigger};
use slide_core::sim::{RunOptions, Scenario, StopRule, Topology, TraceMode};
use slide_core::NodeId;

/// An all-honest scenario on the complete graph with D = 2C.
pub fn honest(n: usize, seed: u64) -> Scenario {
    let c = 12 * (n * n) as u64;
    Scenario::from_json(&format!(
        r#"{{"name":"honest-n{n}","n":{n},"capacity":{c},"bandwidth_bits":8192,"k":4,"lambda_inv":4,"d":{},"messages":3,"seed":{seed},"rounds":3000000}}"#,
        2 * c
    ))
    .unwrap()
}

/// One corrupt node 1 running `strategy`, with D large enough that a
/// withheld parcel must show up as excess holdings.
pub fn adversarial(n: usize, k: usize, seed: u64, strategy: StrategySpec, line: bool) -> Scenario {
    let c = 12 * (n * n) as u64;
    let d = 2 * (n as u64 - 2) * c + c;
    let mut sc = Scenario::from_json(&format!(
        r#"{{"name":"adv-n{n}","n":{n},"capacity":{c},"bandwidth_bits":8192,"k":{k},"lambda_inv":2,"d":{d},"messages":3,"seed":{seed},"rounds":600000,"horizon":2000}}"#
    ))
    .unwrap();
    sc.corruption = CorruptionPlan(vec![Corruption { node: NodeId(1), strategy, trigger: Trigger::Start }]);
    if line {
        sc.topology = Topology::Line { order: (0..n as u16).map(NodeId).collect() };
    }
    sc.stop = StopRule::FirstElimination;
    sc
}

pub fn quiet() -> RunOptions {
    RunOptions { trace: TraceMode::Off, ..RunOptions::default() }
}

pub fn tolerant() -> RunOptions {
    RunOptions { trace: TraceMode::Off, keep_going: true, ..RunOptions::default() }
}
