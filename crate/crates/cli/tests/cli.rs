use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slide-sim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_artifacts_and_a_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("--out").arg(dir.path()).arg("run").arg(scenario("honest-n4")).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("scenario,seed,n,rounds,delivered"));
    assert!(text.contains("honest-n4,1,4,"));
    for ext in ["report.jsonl", "metrics.json", "summary.csv", "trace.jsonl", "schedule.jsonl"] {
        assert!(dir.path().join(format!("honest-n4-1.{ext}")).exists(), "{ext}");
    }
}

#[test]
fn seed_flag_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("SLIDE_SIM_OUT", dir.path())
        .args(["--quiet", "run", "--seed", "7", "--trace", "digest"])
        .arg(scenario("honest-n4"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert!(dir.path().join("honest-n4-7.metrics.json").exists());
}

#[test]
fn replay_reproduces_a_recorded_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = bin().arg("--out").arg(dir.path()).args(["--quiet", "run"]).arg(scenario("duplication-line-n4")).output().unwrap();
    assert!(run.status.success());
    let trace = dir.path().join("duplication-line-n4-1.trace.jsonl");
    let o = bin().arg("--out").arg(dir.path()).arg("replay").arg(&trace).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    // a doctored header no longer matches
    let text = std::fs::read_to_string(&trace).unwrap();
    let (head, rest) = text.split_once('\n').unwrap();
    let mut header: serde_json::Value = serde_json::from_str(head).unwrap();
    header["metrics_digest"] = "00".into();
    std::fs::write(&trace, format!("{header}\n{rest}")).unwrap();
    let o = bin().arg("--out").arg(dir.path()).arg("replay").arg(&trace).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn sweep_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("--out").arg(dir.path()).args(["--quiet", "sweep"]).arg(scenario("honest-n4")).args(["--seeds", "1..4"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("honest-n4.sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(rows[1].starts_with("honest-n4,1,"));
    assert!(rows[3].starts_with("honest-n4,3,"));
}

#[test]
fn report_compares_against_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let run = bin().arg("--out").arg(dir.path()).args(["--quiet", "run", "--trace", "off"]).arg(scenario("honest-n4")).output().unwrap();
    assert!(run.status.success());
    let o = bin()
        .arg("report")
        .arg(dir.path().join("honest-n4-1.metrics.json"))
        .arg(dir.path().join("honest-n4-1.schedule.jsonl"))
        .args(["--checkpoints", "4"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "round,oracle_messages,protocol_messages,ratio");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].contains("oracle_violations=0"), "{text}");
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("--out").arg(dir.path()).args(["run", "no/such/scenario.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n": 4, "capacity": 10, "k": 4, "seed": 1, "rounds": 10}"#).unwrap();
    let o = bin().arg("--out").arg(dir.path()).arg("run").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario invalid"));
}
