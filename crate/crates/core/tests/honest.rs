mod common;

use slide_core::adversary::{DeliveryPolicy, ScheduleSpec};
use slide_core::crypto::{HeBackend, SigBackend};
use slide_core::model::Outcome;
use slide_core::sim::{run, CheckEvery, RunOptions, Topology, TraceMode};
use slide_core::NodeId;

use common::{honest, quiet};

fn assert_clean(sc: &slide_core::Scenario, opts: RunOptions) {
    let out = run(sc, opts).unwrap();
    let m = &out.metrics;
    assert_eq!(m.delivered_messages, m.messages, "{}: {:?}", sc.name, m.outcomes());
    assert_eq!(out.delivered, out.messages);
    assert!(m.delivered_in_order);
    assert!(m.outcomes().iter().all(|o| *o == Outcome::S1));
    assert!(m.violations.is_empty(), "{:?}", m.violations);
    assert!(m.eliminations.is_empty());
    assert!(m.invariants.conservation_checks > 0);
}

#[test]
fn complete_graph_delivers_everything() {
    for n in [4, 6] {
        for seed in 0..3 {
            assert_clean(&honest(n, seed), quiet());
        }
    }
}

#[test]
fn per_round_checks_pass() {
    let opts = RunOptions { check_every: CheckEvery::Round, ..quiet() };
    assert_clean(&honest(5, 9), opts);
}

#[test]
fn line_topology_delivers() {
    let mut sc = honest(4, 2);
    sc.topology = Topology::Line { order: vec![NodeId(0), NodeId(2), NodeId(1), NodeId(3)] };
    assert_clean(&sc, quiet());
}

#[test]
fn lifo_delivery_and_sweep_schedule() {
    let mut sc = honest(4, 3);
    sc.delivery = DeliveryPolicy::Lifo;
    assert_clean(&sc, quiet());
    let mut sc = honest(4, 3);
    sc.schedule = ScheduleSpec::PathSweep { path: vec![] };
    assert_clean(&sc, quiet());
}

#[test]
fn partition_heals() {
    let mut sc = honest(4, 5);
    sc.schedule = ScheduleSpec::PartitionThenHeal { side: vec![NodeId(0), NodeId(1)], heal_round: 3000 };
    let out = run(&sc, quiet()).unwrap();
    assert_eq!(out.metrics.delivered_messages, 3);
    // nothing can cross the cut before it heals
    assert!(out.metrics.delivery_curve.iter().all(|(r, _)| *r >= 3000));
}

#[test]
fn real_crypto_backends() {
    let mut sc = honest(4, 1);
    sc.messages = 1;
    sc.crypto.he_backend = HeBackend::ExpElgamal;
    sc.crypto.sig_backend = SigBackend::Ed25519;
    sc.bandwidth_bits = 16384;
    assert_clean(&sc, quiet());
}

#[test]
fn trace_modes_agree_on_digest() {
    let sc = honest(4, 4);
    let a = run(&sc, RunOptions { trace: TraceMode::Digest, ..RunOptions::default() }).unwrap();
    let b = run(&sc, RunOptions { trace: TraceMode::Full, ..RunOptions::default() }).unwrap();
    assert!(a.metrics.trace_digest.is_some());
    assert_eq!(a.metrics.trace_digest, b.metrics.trace_digest);
    assert_eq!(b.trace.events.len() as u64, b.metrics.rounds);
}

#[test]
fn zero_messages_is_an_empty_run() {
    let mut sc = honest(4, 0);
    sc.messages = 0;
    let out = run(&sc, quiet()).unwrap();
    assert_eq!(out.metrics.delivered_messages, 0);
    assert!(out.metrics.reports.is_empty());
}
