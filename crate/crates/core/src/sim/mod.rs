//! Scenario ingestion, the event loop, and run artifacts.

mod engine;
mod metrics;
mod scenario;
mod trace;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use engine::{run, CheckEvery, Engine, RunOptions, RunOutput, SimError};
pub use metrics::{Elimination, InvariantStats, RunMetrics};
pub use scenario::{control_overhead_bits, CryptoConfig, Scenario, ScenarioError, StopRule, Topology};
pub use trace::{TraceEvent, TraceLog, TraceMode};

/// First line of a trace file: enough to re-run the recorded execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub trace_version: u32,
    pub scenario: Scenario,
    pub check_every: CheckEvery,
    pub digest: Option<String>,
    pub metrics_digest: String,
}

pub const TRACE_VERSION: u32 = 1;

/// blake3 of the canonical JSON rendering of the metrics.
pub fn metrics_digest(m: &RunMetrics) -> String {
    blake3::hash(&serde_json::to_vec(m).expect("metrics serialize")).to_hex().to_string()
}

/// Paths of the files written for one run.
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub report: PathBuf,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub trace: PathBuf,
    pub schedule: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path, stem: &str) -> RunFiles {
        RunFiles {
            report: dir.join(format!("{stem}.report.jsonl")),
            metrics: dir.join(format!("{stem}.metrics.json")),
            summary: dir.join(format!("{stem}.summary.csv")),
            trace: dir.join(format!("{stem}.trace.jsonl")),
            schedule: dir.join(format!("{stem}.schedule.jsonl")),
        }
    }
}

/// Writes the report, metrics, CSV summary, trace and schedule of a run.
pub fn write_run(files: &RunFiles, scenario: &Scenario, check_every: CheckEvery, out: &RunOutput) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(&files.report)?);
    for r in &out.metrics.reports {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    std::fs::write(&files.metrics, serde_json::to_vec_pretty(&out.metrics)?)?;
    std::fs::write(&files.summary, format!("{}\n{}\n", RunMetrics::CSV_HEADER, out.metrics.csv_row()))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&files.trace)?);
    let header = TraceHeader {
        trace_version: TRACE_VERSION,
        scenario: scenario.clone(),
        check_every,
        digest: out.metrics.trace_digest.clone(),
        metrics_digest: metrics_digest(&out.metrics),
    };
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    out.trace.write_jsonl(&mut f)?;
    f.flush()?;
    crate::adversary::write_schedule(&files.schedule, &out.schedule)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("empty trace file")]
    Empty,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("replay diverged: {0}")]
    Diverged(String),
}

pub fn read_trace_header(path: &Path) -> Result<TraceHeader, ReplayError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let line = f.lines().next().ok_or(ReplayError::Empty)??;
    Ok(serde_json::from_str(&line)?)
}

/// Re-runs the execution recorded in a trace file and compares the trace
/// digest and metrics byte for byte.
pub fn replay(path: &Path) -> Result<RunOutput, ReplayError> {
    let header = read_trace_header(path)?;
    let opts = RunOptions {
        check_every: header.check_every,
        trace: if header.digest.is_some() { TraceMode::Full } else { TraceMode::Off },
        keep_going: true,
        he_backend: None,
        base_dir: path.parent().map(Path::to_path_buf),
    };
    let out = run(&header.scenario, opts)?;
    if out.metrics.trace_digest != header.digest {
        return Err(ReplayError::Diverged(format!("trace digest {:?} != {:?}", out.metrics.trace_digest, header.digest)));
    }
    let md = metrics_digest(&out.metrics);
    if md != header.metrics_digest {
        return Err(ReplayError::Diverged(format!("metrics digest {md} != {}", header.metrics_digest)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_files_share_a_stem() {
        let f = RunFiles::in_dir(Path::new("out"), "a-1");
        assert_eq!(f.trace, Path::new("out/a-1.trace.jsonl"));
        assert_eq!(f.metrics, Path::new("out/a-1.metrics.json"));
        assert_eq!(f.schedule, Path::new("out/a-1.schedule.jsonl"));
    }

    #[test]
    fn replay_needs_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(replay(&empty), Err(ReplayError::Empty)));
        let junk = dir.path().join("junk.jsonl");
        std::fs::write(&junk, "{\"trace_version\": 1}\n").unwrap();
        assert!(matches!(replay(&junk), Err(ReplayError::Header(_))));
        assert!(matches!(replay(&dir.path().join("missing")), Err(ReplayError::Io(_))));
    }
}
