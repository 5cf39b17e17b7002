mod common;

use slide_core::adversary::{read_schedule, ScheduleSpec, StrategySpec};
use slide_core::sim::{metrics_digest, read_trace_header, replay, run, write_run, CheckEvery, RunFiles, RunOptions, TraceMode};

use common::{adversarial, honest};

fn full() -> RunOptions {
    RunOptions { trace: TraceMode::Full, keep_going: true, ..RunOptions::default() }
}

#[test]
fn same_seed_same_everything() {
    let sc = honest(5, 42);
    let a = run(&sc, full()).unwrap();
    let b = run(&sc, full()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trace.digest(), b.trace.digest());
    assert_eq!(a.schedule, b.schedule);
    assert_eq!(serde_json::to_vec(&a.metrics).unwrap(), serde_json::to_vec(&b.metrics).unwrap());
}

#[test]
fn different_seeds_differ() {
    let a = run(&honest(4, 1), full()).unwrap();
    let b = run(&honest(4, 2), full()).unwrap();
    assert_ne!(a.metrics.trace_digest, b.metrics.trace_digest);
}

#[test]
fn written_trace_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let sc = adversarial(4, 4, 3, StrategySpec::Uphill, true);
    let out = run(&sc, full()).unwrap();
    let files = RunFiles::in_dir(dir.path(), "uphill");
    write_run(&files, &sc, CheckEvery::Transmission, &out).unwrap();
    let header = read_trace_header(&files.trace).unwrap();
    assert_eq!(header.metrics_digest, metrics_digest(&out.metrics));
    let again = replay(&files.trace).unwrap();
    assert_eq!(again.metrics, out.metrics);
    let mut a = Vec::new();
    let mut b = Vec::new();
    out.trace.write_jsonl(&mut a).unwrap();
    again.trace.write_jsonl(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tampered_trace_header_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let sc = honest(4, 8);
    let out = run(&sc, full()).unwrap();
    let files = RunFiles::in_dir(dir.path(), "h");
    write_run(&files, &sc, CheckEvery::Transmission, &out).unwrap();
    let text = std::fs::read_to_string(&files.trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let mut header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    header["metrics_digest"] = serde_json::Value::String("00".into());
    let h = header.to_string();
    lines[0] = &h;
    std::fs::write(&files.trace, lines.join("\n")).unwrap();
    assert!(replay(&files.trace).is_err());
}

#[test]
fn recorded_schedule_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let sc = honest(4, 11);
    let out = run(&sc, full()).unwrap();
    let files = RunFiles::in_dir(dir.path(), "rec");
    write_run(&files, &sc, CheckEvery::Transmission, &out).unwrap();
    let acts = read_schedule(&files.schedule).unwrap();
    assert_eq!(acts, out.schedule);
    let mut replayed = sc.clone();
    replayed.schedule = ScheduleSpec::Replay { file: Some("rec.schedule.jsonl".into()), activations: vec![] };
    let opts = RunOptions { base_dir: Some(dir.path().to_path_buf()), ..full() };
    let again = run(&replayed, opts).unwrap();
    assert_eq!(again.metrics.trace_digest, out.metrics.trace_digest);
    assert_eq!(again.metrics.delivered_messages, out.metrics.delivered_messages);
}
