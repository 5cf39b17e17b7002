//! `slide-sim`: run scenarios, replay traces, sweep seeds and compare runs
//! against the offline oracle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use slide_core::adversary::read_schedule;
use slide_core::analysis::{competitive_report, CompetitiveReport};
use slide_core::crypto::HeBackend;
use slide_core::model::NodeId;
use slide_core::sim::{self, CheckEvery, RunFiles, RunMetrics, RunOptions, Scenario, TraceMode};

#[derive(Parser)]
#[command(name = "slide-sim", version, about = "Deterministic Slide routing simulator")]
struct Cli {
    /// Output directory for run artifacts.
    #[arg(long, global = true, env = "SLIDE_SIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Suppress per-run summaries on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Round,
    Transmission,
}

#[derive(Clone, Copy, ValueEnum)]
enum He {
    Transparent,
    ExpElgamal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Trace {
    Off,
    Digest,
    Full,
}

#[derive(clap::Args)]
struct RunArgs {
    /// How often conservation and memory are checked.
    #[arg(long, value_enum, default_value = "transmission")]
    check_every: Check,
    /// Overrides the scenario's homomorphic backend.
    #[arg(long, value_enum)]
    he_backend: Option<He>,
    /// Per-round events to keep: none, a running digest, or every event.
    #[arg(long, value_enum, default_value = "full")]
    trace: Trace,
    /// Record invariant violations instead of stopping at the first.
    #[arg(long)]
    keep_going: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Re-run the execution recorded in a trace file and compare digests.
    Replay { trace: PathBuf },
    /// Run a scenario over a range of seeds, e.g. `--seeds 0..20`.
    Sweep {
        scenario: PathBuf,
        /// Half-open range `a..b`.
        #[arg(long, value_parser = parse_range)]
        seeds: (u64, u64),
        #[command(flatten)]
        args: RunArgs,
    },
    /// Compare a run's deliveries with the offline oracle; prints CSV.
    Report {
        metrics: PathBuf,
        schedule: PathBuf,
        /// Corrupt nodes the oracle must avoid, e.g. `1,2`.
        #[arg(long, value_delimiter = ',')]
        corrupt: Vec<u16>,
        /// Evenly spaced rounds at which to compare.
        #[arg(long, default_value_t = 10)]
        checkpoints: usize,
    },
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: u64 = a.parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.parse().map_err(|e| format!("{e}"))?;
    if b <= a {
        return Err("empty seed range".into());
    }
    Ok((a, b))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}: no such file")]
    Missing(PathBuf),
    #[error(transparent)]
    Scenario(#[from] sim::ScenarioError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Replay(#[from] sim::ReplayError),
    #[error(transparent)]
    Schedule(#[from] slide_core::adversary::ScheduleError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Missing(_) | CliError::Scenario(_) | CliError::Json(_) => 2,
            CliError::Sim(sim::SimError::Scenario(_)) => 2,
            _ => 1,
        }
    }
}

fn require(p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(p.to_path_buf()))
    }
}

fn options(args: &RunArgs, base: &Path) -> RunOptions {
    RunOptions {
        check_every: match args.check_every {
            Check::Round => CheckEvery::Round,
            Check::Transmission => CheckEvery::Transmission,
        },
        trace: match args.trace {
            Trace::Off => TraceMode::Off,
            Trace::Digest => TraceMode::Digest,
            Trace::Full => TraceMode::Full,
        },
        keep_going: args.keep_going,
        he_backend: None,
        base_dir: Some(base.to_path_buf()),
    }
}

fn load(path: &Path, args: &RunArgs) -> Result<Scenario, CliError> {
    require(path)?;
    let mut sc = Scenario::load(path)?;
    if let Some(he) = args.he_backend {
        // kept in the scenario so a replay uses the same backend
        sc.crypto.he_backend = match he {
            He::Transparent => HeBackend::Transparent,
            He::ExpElgamal => HeBackend::ExpElgamal,
        };
    }
    if sc.name.is_empty() {
        sc.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(sc)
}

fn run_one(sc: &Scenario, args: &RunArgs, base: &Path, out: &Path) -> Result<RunMetrics, CliError> {
    let result = sim::run(sc, options(args, base))?;
    std::fs::create_dir_all(out)?;
    let files = RunFiles::in_dir(out, &format!("{}-{}", sc.name, sc.seed));
    let check = options(args, base).check_every;
    sim::write_run(&files, sc, check, &result)?;
    Ok(result.metrics)
}

fn base_of(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn exec(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run { scenario, seed, args } => {
            let mut sc = load(&scenario, &args)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            let m = run_one(&sc, &args, &base_of(&scenario), &cli.out)?;
            if !cli.quiet {
                println!("{}", RunMetrics::CSV_HEADER);
                println!("{}", m.csv_row());
            }
        }
        Cmd::Replay { trace } => {
            require(&trace)?;
            let out = sim::replay(&trace)?;
            if !cli.quiet {
                println!("replay ok: {} rounds, {} delivered", out.metrics.rounds, out.metrics.delivered_messages);
            }
        }
        Cmd::Sweep { scenario, seeds, args } => {
            let base = load(&scenario, &args)?;
            std::fs::create_dir_all(&cli.out)?;
            let mut rows = vec![RunMetrics::CSV_HEADER.to_string()];
            if !cli.quiet {
                println!("{}", RunMetrics::CSV_HEADER);
            }
            for s in seeds.0..seeds.1 {
                let mut sc = base.clone();
                sc.seed = s;
                let m = run_one(&sc, &args, &base_of(&scenario), &cli.out)?;
                if !cli.quiet {
                    println!("{}", m.csv_row());
                }
                rows.push(m.csv_row());
            }
            std::fs::write(cli.out.join(format!("{}.sweep.csv", base.name)), rows.join("\n") + "\n")?;
        }
        Cmd::Report { metrics, schedule, corrupt, checkpoints } => {
            require(&metrics)?;
            require(&schedule)?;
            let m: RunMetrics = serde_json::from_slice(&std::fs::read(&metrics)?)?;
            let sched = read_schedule(&schedule)?;
            let corrupt: Vec<NodeId> = corrupt.into_iter().map(NodeId).collect();
            let rep = competitive_report(&m, &sched, &corrupt, checkpoints);
            print_report(&rep);
        }
    }
    Ok(())
}

fn print_report(rep: &CompetitiveReport) {
    println!("{}", CompetitiveReport::CSV_HEADER);
    for row in rep.csv_rows() {
        println!("{row}");
    }
    let c = rep.slack_c.map_or("unbounded".to_string(), |c| format!("{c:.6}"));
    println!("# n={} g={} slack_c={} oracle_violations={}", rep.n, rep.g, c, rep.oracle_violations);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slide-sim: {e}");
            ExitCode::from(e.code())
        }
    }
}
