//! Run-level measurements.

use serde::{Deserialize, Serialize};

use crate::endpoints::{DetectionRecord, TransmissionReport};
use crate::model::{MemoryLedger, NodeId, Outcome, Params};

/// Counts of every invariant evaluation, so a clean run shows what was checked.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantStats {
    pub conservation_checks: u64,
    pub transfer_checks: u64,
    pub memory_checks: u64,
    pub wrap_checks: u64,
    pub insertion_checks: u64,
    /// Largest number of failed transmissions without a resolved testimony
    /// set or an elimination.
    pub max_failures_open: u64,
    /// Largest number of failed transmissions between eliminations.
    pub max_failures_between_eliminations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub round: u64,
    pub node: NodeId,
    pub truly_corrupt: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub seed: u64,
    pub params: Params,
    pub rounds: u64,
    pub delivered_messages: u64,
    pub messages: u64,
    /// `(round, delivered)` at every change of the delivered count.
    pub delivery_curve: Vec<(u64, u64)>,
    pub reports: Vec<TransmissionReport>,
    pub detections: Vec<DetectionRecord>,
    pub eliminations: Vec<Elimination>,
    pub memory_max: Vec<MemoryLedger>,
    pub invariants: InvariantStats,
    pub violations: Vec<String>,
    /// Observations that are not violations, e.g. desk-scale parameter notes.
    pub notes: Vec<String>,
    pub oversize_dropped: u64,
    pub delivered_in_order: bool,
    pub trace_digest: Option<String>,
}

impl RunMetrics {
    /// f(x): messages delivered by round `x`.
    pub fn delivered_by(&self, x: u64) -> u64 {
        self.delivery_curve.iter().take_while(|(r, _)| *r <= x).last().map_or(0, |(_, d)| *d)
    }

    pub fn outcomes(&self) -> Vec<Outcome> {
        self.reports.iter().map(|r| r.outcome).collect()
    }

    pub fn count(&self, o: Outcome) -> usize {
        self.reports.iter().filter(|r| r.outcome == o).count()
    }

    /// One CSV row summarizing the run.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.seed,
            self.params.n,
            self.rounds,
            self.delivered_messages,
            self.count(Outcome::S1),
            self.count(Outcome::F2),
            self.count(Outcome::F3),
            self.count(Outcome::F4),
            self.eliminations.len(),
            self.violations.len()
        )
    }

    pub const CSV_HEADER: &'static str = "scenario,seed,n,rounds,delivered,s1,f2,f3,f4,eliminations,violations";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics() -> RunMetrics {
        RunMetrics {
            scenario: "t".into(),
            seed: 1,
            params: Params { n: 4, capacity: 192, bandwidth_bits: 8192, k: 4, lambda_inv: 4, d: 384, modulus: 12289, payload_bytes: 8, horizon: 100 },
            rounds: 100,
            delivered_messages: 2,
            messages: 3,
            delivery_curve: vec![(10, 1), (40, 2)],
            reports: Vec::new(),
            detections: Vec::new(),
            eliminations: Vec::new(),
            memory_max: Vec::new(),
            invariants: InvariantStats::default(),
            violations: Vec::new(),
            notes: Vec::new(),
            oversize_dropped: 0,
            delivered_in_order: true,
            trace_digest: None,
        }
    }

    #[test]
    fn delivery_curve_is_a_step_function() {
        let m = metrics();
        assert_eq!([0, 9, 10, 39, 40, 1000].map(|x| m.delivered_by(x)), [0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn csv_row_matches_header() {
        let m = metrics();
        assert_eq!(m.csv_row().split(',').count(), RunMetrics::CSV_HEADER.split(',').count());
        assert_eq!(m.csv_row(), "t,1,4,100,2,0,0,0,0,0,0");
    }
}
