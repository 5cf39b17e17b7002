//! Edge-activation schedules.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::NodeId;

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("schedule exhausted after {0} activations")]
    ScheduleExhausted(u64),
    #[error("edge {0}-{1} is not in the topology")]
    UnknownEdge(NodeId, NodeId),
    #[error("schedule has no edges to activate")]
    Empty,
    #[error("schedule file: {0}")]
    Io(#[from] std::io::Error),
    #[error("schedule line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// One line of a schedule file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub round: u64,
    pub u: NodeId,
    pub v: NodeId,
}

/// Which in-custody packet an activation delivers when several are queued.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryPolicy {
    #[default]
    Fifo,
    Lifo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleSpec {
    Uniform,
    /// Cycles through `path` (consecutive node pairs), or through the
    /// topology's edge list when no path is given.
    PathSweep {
        #[serde(default)]
        path: Vec<NodeId>,
    },
    /// Only edges inside `side` or inside its complement are activated before
    /// `heal_round`; afterwards, uniform over all edges.
    PartitionThenHeal { side: Vec<NodeId>, heal_round: u64 },
    /// Activations read from a JSON-lines file, or given inline.
    Replay {
        #[serde(default)]
        file: Option<String>,
        #[serde(default)]
        activations: Vec<Activation>,
    },
}

fn norm(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub struct Schedule {
    kind: Kind,
    edges: Vec<(NodeId, NodeId)>,
    rng: ChaCha8Rng,
    issued: u64,
    limit: u64,
}

enum Kind {
    Uniform,
    Sweep(Vec<(NodeId, NodeId)>),
    Partition { inside: Vec<(NodeId, NodeId)>, heal_round: u64 },
    Replay(Vec<Activation>),
}

impl Schedule {
    /// `edges` is the topology; `limit` bounds the number of activations.
    pub fn new(spec: &ScheduleSpec, edges: &[(NodeId, NodeId)], seed: u64, limit: u64, base_dir: Option<&Path>) -> Result<Schedule, ScheduleError> {
        let edges: Vec<(NodeId, NodeId)> = edges.iter().map(|&(a, b)| norm(a, b)).collect();
        if edges.is_empty() {
            return Err(ScheduleError::Empty);
        }
        let known = |a: NodeId, b: NodeId| -> Result<(NodeId, NodeId), ScheduleError> {
            let e = norm(a, b);
            if edges.contains(&e) {
                Ok(e)
            } else {
                Err(ScheduleError::UnknownEdge(a, b))
            }
        };
        let kind = match spec {
            ScheduleSpec::Uniform => Kind::Uniform,
            ScheduleSpec::PathSweep { path } => {
                let seq = if path.len() >= 2 {
                    path.windows(2).map(|w| known(w[0], w[1])).collect::<Result<Vec<_>, _>>()?
                } else {
                    edges.clone()
                };
                Kind::Sweep(seq)
            }
            ScheduleSpec::PartitionThenHeal { side, heal_round } => {
                let inside: Vec<_> = edges.iter().copied().filter(|(a, b)| side.contains(a) == side.contains(b)).collect();
                if inside.is_empty() {
                    return Err(ScheduleError::Empty);
                }
                Kind::Partition { inside, heal_round: *heal_round }
            }
            ScheduleSpec::Replay { file, activations } => {
                let mut acts = activations.clone();
                if let Some(f) = file {
                    let p = match base_dir {
                        Some(d) if Path::new(f).is_relative() => d.join(f),
                        _ => Path::new(f).to_path_buf(),
                    };
                    acts.extend(read_schedule(&p)?);
                }
                for a in &acts {
                    known(a.u, a.v)?;
                }
                Kind::Replay(acts)
            }
        };
        Ok(Schedule { kind, edges, rng: ChaCha8Rng::seed_from_u64(seed), issued: 0, limit })
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// The edge activated in the next round.
    pub fn next_activation(&mut self) -> Result<(NodeId, NodeId), ScheduleError> {
        if self.issued >= self.limit {
            return Err(ScheduleError::ScheduleExhausted(self.issued));
        }
        let r = self.issued;
        let e = match &self.kind {
            Kind::Uniform => self.edges[self.rng.gen_range(0..self.edges.len())],
            Kind::Sweep(seq) => seq[(r % seq.len() as u64) as usize],
            Kind::Partition { inside, heal_round } => {
                if r < *heal_round {
                    inside[self.rng.gen_range(0..inside.len())]
                } else {
                    self.edges[self.rng.gen_range(0..self.edges.len())]
                }
            }
            Kind::Replay(acts) => match acts.get(r as usize) {
                Some(a) => norm(a.u, a.v),
                None => return Err(ScheduleError::ScheduleExhausted(r)),
            },
        };
        self.issued += 1;
        Ok(e)
    }
}

pub fn read_schedule(path: &Path) -> Result<Vec<Activation>, ScheduleError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ScheduleError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_schedule(path: &Path, acts: &[Activation]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for a in acts {
        serde_json::to_writer(&mut f, a)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: u16) -> Vec<(NodeId, NodeId)> {
        let mut e = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                e.push((NodeId(a), NodeId(b)));
            }
        }
        e
    }

    #[test]
    fn uniform_frequencies_within_three_sigma() {
        let edges = complete(5);
        assert_eq!(edges.len(), 10);
        let mut s = Schedule::new(&ScheduleSpec::Uniform, &edges, 11, 100_000, None).unwrap();
        let mut counts = vec![0u64; 10];
        for _ in 0..100_000 {
            let e = s.next_activation().unwrap();
            counts[edges.iter().position(|x| *x == e).unwrap()] += 1;
        }
        let sigma = (100_000f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * sigma, "{c}");
        }
        assert!(matches!(s.next_activation(), Err(ScheduleError::ScheduleExhausted(100_000))));
    }

    #[test]
    fn partition_respects_cut_until_heal() {
        let edges = complete(6);
        let side = vec![NodeId(0), NodeId(1), NodeId(2)];
        let spec = ScheduleSpec::PartitionThenHeal { side: side.clone(), heal_round: 500 };
        let mut s = Schedule::new(&spec, &edges, 3, 2000, None).unwrap();
        let mut crossed_after = false;
        for r in 0..2000 {
            let (a, b) = s.next_activation().unwrap();
            let crosses = side.contains(&a) != side.contains(&b);
            if r < 500 {
                assert!(!crosses, "round {r} crossed the cut");
            } else {
                crossed_after |= crosses;
            }
        }
        assert!(crossed_after);
    }

    #[test]
    fn replay_file_round_trips() {
        let edges = complete(4);
        let mut s = Schedule::new(&ScheduleSpec::Uniform, &edges, 9, 50, None).unwrap();
        let acts: Vec<Activation> = (0..50)
            .map(|r| {
                let (u, v) = s.next_activation().unwrap();
                Activation { round: r, u, v }
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_schedule(&p, &acts).unwrap();
        let spec = ScheduleSpec::Replay { file: Some("s.jsonl".into()), activations: vec![] };
        let mut r = Schedule::new(&spec, &edges, 0, u64::MAX, Some(dir.path())).unwrap();
        for a in &acts {
            assert_eq!(r.next_activation().unwrap(), (a.u, a.v));
        }
        assert!(r.next_activation().is_err());
    }

    #[test]
    fn sweep_follows_path() {
        let edges = vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))];
        let spec = ScheduleSpec::PathSweep { path: vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)] };
        let mut s = Schedule::new(&spec, &edges, 0, 6, None).unwrap();
        let got: Vec<_> = (0..6).map(|_| s.next_activation().unwrap()).collect();
        assert_eq!(got[3], got[0]);
        assert_eq!(got[1], (NodeId(1), NodeId(2)));
    }

    #[test]
    fn unknown_edge_rejected() {
        let edges = vec![(NodeId(0), NodeId(1))];
        let spec = ScheduleSpec::PathSweep { path: vec![NodeId(0), NodeId(2)] };
        assert!(matches!(Schedule::new(&spec, &edges, 0, 1, None), Err(ScheduleError::UnknownEdge(..))));
    }
}
