//! Exact balls-into-buckets probabilities.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// `m` unlabelled balls in `k` labelled buckets, with target counts `v`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallsBucketsInstance {
    pub m: u32,
    pub k: u32,
    pub v: Vec<u32>,
}

impl BallsBucketsInstance {
    pub fn new(v: Vec<u32>) -> Result<BallsBucketsInstance, AnalysisError> {
        let inst = BallsBucketsInstance { m: v.iter().sum(), k: v.len() as u32, v };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.k == 0 {
            return Err(AnalysisError::InvalidInstance("k = 0".into()));
        }
        if self.v.len() != self.k as usize {
            return Err(AnalysisError::InvalidInstance(format!("{} counts for k = {}", self.v.len(), self.k)));
        }
        if self.v.iter().map(|&x| x as u64).sum::<u64>() != self.m as u64 {
            return Err(AnalysisError::InvalidInstance("counts do not sum to m".into()));
        }
        if self.m < self.k {
            return Err(AnalysisError::InvalidInstance(format!("m = {} < k = {}", self.m, self.k)));
        }
        Ok(())
    }
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Pr[X = v] = m! / (k^m · Π v_i!) for X multinomial with uniform buckets.
pub fn multinomial_prob(inst: &BallsBucketsInstance) -> Result<BigRational, AnalysisError> {
    inst.validate()?;
    Ok(multinomial_unchecked(inst.m, inst.k, &inst.v))
}

fn multinomial_unchecked(m: u32, k: u32, v: &[u32]) -> BigRational {
    let denom = v.iter().fold(BigInt::from(k).pow(m), |acc, &x| acc * factorial(x));
    BigRational::new(factorial(m), denom)
}

/// Every composition of `m` into `k` non-negative parts, in lexicographic order.
pub fn compositions(m: u32, k: u32) -> Vec<Vec<u32>> {
    fn rec(m: u32, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for x in 0..=m {
            prefix.push(x);
            rec(m - x, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(m, k, &mut Vec::new(), &mut out);
    }
    out
}

pub fn is_balanced(v: &[u32]) -> bool {
    match (v.iter().min(), v.iter().max()) {
        (Some(lo), Some(hi)) => hi - lo <= 1,
        _ => true,
    }
}

/// The balanced composition of `m` into `k` parts (larger parts first).
pub fn balanced(m: u32, k: u32) -> Vec<u32> {
    (0..k).map(|i| m / k + u32::from(i < m % k)).collect()
}

/// Sum of the multinomial probabilities over all compositions.
pub fn total_probability(m: u32, k: u32) -> BigRational {
    compositions(m, k).iter().fold(BigRational::zero(), |acc, v| acc + multinomial_unchecked(m, k, v))
}

/// Whether Π v_i! attains its minimum over compositions exactly at the
/// balanced ones.
pub fn factorial_product_minimized_at_balanced(m: u32, k: u32) -> bool {
    let comps = compositions(m, k);
    let prod = |v: &Vec<u32>| v.iter().fold(BigInt::one(), |acc, &x| acc * factorial(x));
    let min = comps.iter().map(prod).min().expect("non-empty");
    comps.iter().all(|v| (prod(v) == min) == is_balanced(v))
}

/// The composition maximizing Pr[X = v]; ties broken lexicographically.
pub fn argmax(m: u32, k: u32) -> Vec<u32> {
    let mut best: Option<(BigRational, Vec<u32>)> = None;
    for v in compositions(m, k) {
        let p = multinomial_unchecked(m, k, &v);
        if best.as_ref().is_none_or(|(bp, _)| p > *bp) {
            best = Some((p, v));
        }
    }
    best.expect("non-empty").1
}

/// Largest point probability, attained at a balanced vector.
pub fn max_prob(m: u32, k: u32) -> BigRational {
    multinomial_unchecked(m, k, &balanced(m, k))
}

/// The closed-form bound √(ek) / (√(2π))^(k−1).
pub fn max_prob_bound(k: u32) -> f64 {
    (std::f64::consts::E * k as f64).sqrt() / (2.0 * std::f64::consts::PI).sqrt().powi(k as i32 - 1)
}

/// Exact check that `p ≤ √(ek)/(√(2π))^(k−1)`, via p² ≤ e_lo·k / (2π_hi)^(k−1)
/// with rational enclosures e_lo < e and π_hi > π. A `true` is a proof.
pub fn below_bound_exact(p: &BigRational, k: u32) -> bool {
    let e_lo = BigRational::new(BigInt::from(2_718_281_828u64), BigInt::from(1_000_000_000u64));
    let two_pi_hi = BigRational::new(BigInt::from(6_283_185_308u64), BigInt::from(1_000_000_000u64));
    let mut rhs = e_lo * BigRational::from_integer(BigInt::from(k));
    for _ in 1..k {
        rhs /= two_pi_hi.clone();
    }
    p * p <= rhs
}

/// Monte Carlo of the guessing game behind the F3 detector: `m` parcels are
/// assigned secret sets uniformly; an adversary who must name the resulting
/// count vector guesses the most likely (balanced) one. Returns the fraction
/// of trials in which the guess is wrong, i.e. the cheat is detected.
pub fn synthetic_detection_rate(k: u32, m: u32, trials: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guess = balanced(m, k);
    let mut caught = 0u32;
    let mut counts = vec![0u32; k as usize];
    for _ in 0..trials {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..m {
            counts[rng.gen_range(0..k as usize)] += 1;
        }
        if counts != guess {
            caught += 1;
        }
    }
    caught as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn enumerated_small_cases() {
        assert_eq!(multinomial_prob(&BallsBucketsInstance::new(vec![1, 1]).unwrap()).unwrap(), q(1, 2));
        assert_eq!(multinomial_prob(&BallsBucketsInstance::new(vec![2, 0]).unwrap()).unwrap(), q(1, 4));
        assert_eq!(multinomial_prob(&BallsBucketsInstance::new(vec![3]).unwrap()).unwrap(), q(1, 1));
    }

    #[test]
    fn brute_force_agrees() {
        // enumerate all k^m labelled assignments for m=4, k=3
        let (m, k) = (4u32, 3u32);
        let mut hist = std::collections::HashMap::new();
        for code in 0..k.pow(m) {
            let mut v = vec![0u32; k as usize];
            let mut c = code;
            for _ in 0..m {
                v[(c % k) as usize] += 1;
                c /= k;
            }
            *hist.entry(v).or_insert(0i64) += 1;
        }
        for (v, count) in hist {
            assert_eq!(multinomial_unchecked(m, k, &v), q(count, (k as i64).pow(m)));
        }
    }

    #[test]
    fn invalid_instances() {
        assert!(BallsBucketsInstance::new(vec![]).is_err());
        assert!(BallsBucketsInstance::new(vec![1, 0, 0]).is_err());
        let bad = BallsBucketsInstance { m: 3, k: 2, v: vec![1, 1] };
        assert!(multinomial_prob(&bad).is_err());
    }

    #[test]
    fn argmax_is_balanced() {
        assert_eq!(argmax(6, 3), vec![2, 2, 2]);
    }

    #[test]
    fn closed_form_values() {
        assert!((max_prob_bound(1) - 1.6487).abs() < 1e-4);
        assert!((max_prob_bound(2) - 0.9302).abs() < 1e-3);
        assert!((max_prob_bound(8) - 0.00749).abs() < 1e-4);
    }

    #[test]
    fn exact_bound_check_is_tight_enough() {
        assert!(below_bound_exact(&q(1, 2), 2));
        assert!(!below_bound_exact(&q(94, 100), 2));
    }

    #[test]
    fn compositions_count() {
        // C(m+k-1, k-1)
        assert_eq!(compositions(5, 3).len(), 21);
        assert_eq!(compositions(0, 2), vec![vec![0, 0]]);
    }
}
