//! Throughput of a simulated run against the offline oracle, and the
//! memory-growth fit across network sizes.

use serde::{Deserialize, Serialize};

use super::offline::OfflineOracle;
use crate::adversary::Activation;
use crate::model::NodeId;
use crate::sim::RunMetrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: u64,
    pub oracle_messages: u64,
    pub protocol_messages: u64,
    /// oracle / max(1, protocol); 1 when both are zero.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveReport {
    pub n: usize,
    pub packets_per_message: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// Additive allowance, capped at n³.
    pub g: u64,
    /// Smallest c with oracle <= c·n·protocol + g at every checkpoint; `None`
    /// when some checkpoint has no protocol deliveries but exceeds g.
    pub slack_c: Option<f64>,
    /// Checkpoints where the simulated protocol beat the oracle.
    pub oracle_violations: usize,
}

impl CompetitiveReport {
    pub fn final_ratio(&self) -> f64 {
        self.checkpoints.last().map_or(1.0, |c| c.ratio)
    }

    pub const CSV_HEADER: &'static str = "round,oracle_messages,protocol_messages,ratio";

    pub fn csv_rows(&self) -> Vec<String> {
        self.checkpoints
            .iter()
            .map(|c| format!("{},{},{},{:.6}", c.round, c.oracle_messages, c.protocol_messages, c.ratio))
            .collect()
    }
}

pub fn ratio(oracle: u64, protocol: u64) -> f64 {
    if oracle == 0 && protocol == 0 {
        1.0
    } else {
        oracle as f64 / protocol.max(1) as f64
    }
}

/// Compares `metrics` against the oracle on the same `schedule`, sampling
/// `checkpoints` evenly spaced rounds (the last one is the run's end).
pub fn competitive_report(
    metrics: &RunMetrics,
    schedule: &[Activation],
    corrupt: &[NodeId],
    checkpoints: usize,
) -> CompetitiveReport {
    let p = &metrics.params;
    let n = p.n;
    let ppm = p.data_parcels().max(1);
    let mut oracle = OfflineOracle::new(n, p.capacity, p.sender(), p.receiver(), corrupt);
    let end = metrics.rounds.max(schedule.last().map_or(0, |a| a.round + 1));
    let steps = checkpoints.max(1) as u64;
    let marks: Vec<u64> = (1..=steps).map(|i| (end * i).div_ceil(steps)).collect();
    let mut out = Vec::with_capacity(marks.len());
    let mut it = schedule.iter().peekable();
    for &x in &marks {
        while let Some(a) = it.next_if(|a| a.round < x) {
            oracle.push(a.u, a.v);
        }
        let om = oracle.packets() / ppm;
        let pm = metrics.delivered_by(x.saturating_sub(1));
        out.push(Checkpoint { round: x, oracle_messages: om, protocol_messages: pm, ratio: ratio(om, pm) });
    }
    let g = (n as u64).pow(3);
    let mut slack_c = Some(0.0f64);
    for c in &out {
        let over = c.oracle_messages.saturating_sub(g);
        if over == 0 {
            continue;
        }
        if c.protocol_messages == 0 {
            slack_c = None;
            break;
        }
        let need = over as f64 / (n as f64 * c.protocol_messages as f64);
        slack_c = slack_c.map(|s| s.max(need));
    }
    let oracle_violations = out.iter().filter(|c| c.protocol_messages > c.oracle_messages).count();
    CompetitiveReport { n, packets_per_message: ppm, checkpoints: out, g, slack_c, oracle_violations }
}

/// Least-squares fit of `bits ≈ a·n² + b`, with `b` raised so every residual
/// is nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryFit {
    pub a: f64,
    pub b: f64,
    /// Offset added to the least-squares intercept.
    pub envelope_shift: f64,
    pub points: Vec<(usize, u64)>,
    /// bits(n)/n² for each point, in order of n.
    pub per_n2: Vec<f64>,
}

impl MemoryFit {
    pub fn residuals(&self) -> Vec<f64> {
        self.points.iter().map(|&(n, y)| self.a * (n * n) as f64 + self.b - y as f64).collect()
    }

    /// bits/n² never grows by more than `tol` (relative) from one n to the next.
    pub fn nonincreasing_within(&self, tol: f64) -> bool {
        self.per_n2.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol))
    }
}

pub fn fit_memory(points: &[(usize, u64)]) -> MemoryFit {
    let mut pts = points.to_vec();
    pts.sort();
    let xs: Vec<f64> = pts.iter().map(|&(n, _)| (n * n) as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, y)| y as f64).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b0 = my - a * mx;
    let shift = xs.iter().zip(&ys).map(|(x, y)| y - (a * x + b0)).fold(0.0f64, f64::max);
    let per_n2 = xs.iter().zip(&ys).map(|(x, y)| y / x).collect();
    MemoryFit { a, b: b0 + shift, envelope_shift: shift, points: pts, per_n2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_over_zero_is_one() {
        assert_eq!(ratio(0, 0), 1.0);
        assert_eq!(ratio(6, 0), 6.0);
        assert_eq!(ratio(6, 3), 2.0);
    }

    #[test]
    fn exact_quadratic_fits_with_no_shift() {
        let pts: Vec<_> = [4usize, 6, 8, 10].iter().map(|&n| (n, 3 * (n * n) as u64 + 7)).collect();
        let f = fit_memory(&pts);
        assert!((f.a - 3.0).abs() < 1e-9);
        assert!((f.b - 7.0).abs() < 1e-9);
        assert!(f.residuals().iter().all(|r| *r >= -1e-9));
        assert!(f.nonincreasing_within(0.0));
    }

    #[test]
    fn envelope_makes_residuals_nonnegative() {
        let f = fit_memory(&[(4, 100), (6, 170), (8, 330), (10, 480)]);
        assert!(f.envelope_shift >= 0.0);
        assert!(f.residuals().iter().all(|r| *r >= -1e-9));
    }

    #[test]
    fn cubic_growth_fails_ratio_test() {
        let pts: Vec<_> = [4usize, 6, 8, 10].iter().map(|&n| (n, (n * n * n) as u64)).collect();
        assert!(!fit_memory(&pts).nonincreasing_within(0.10));
    }
}
