use serde::{Deserialize, Serialize};

use super::{NodeId, Role};
use crate::coding::CodingParams;

/// Validated protocol constants. All transfer thresholds derive from `n` and
/// `capacity` and are evaluated in exact integer arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    /// Buffer capacity C in parcels.
    pub capacity: u64,
    /// Edge bandwidth P in bits.
    pub bandwidth_bits: u64,
    /// Security parameter; also the number of secret sets K.
    pub k: usize,
    pub lambda_inv: u64,
    /// Parcels per codeword.
    pub d: u64,
    /// Plaintext modulus of the set-tag encryption.
    pub modulus: u64,
    pub payload_bytes: usize,
    /// Activations after the last insertion before the Sender declares F3.
    pub horizon: u64,
}

impl Params {
    pub fn sender(&self) -> NodeId {
        NodeId(0)
    }

    pub fn receiver(&self) -> NodeId {
        NodeId((self.n - 1) as u16)
    }

    pub fn role(&self, id: NodeId) -> Role {
        if id == self.sender() {
            Role::Sender
        } else if id == self.receiver() {
            Role::Receiver
        } else {
            Role::Internal
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n as u16).map(NodeId)
    }

    /// The halting / inconsistency threshold kCD.
    pub fn kcd(&self) -> u64 {
        (self.k as u64)
            .checked_mul(self.capacity)
            .and_then(|x| x.checked_mul(self.d))
            .expect("kCD overflows u64")
    }

    pub fn data_parcels(&self) -> u64 {
        self.d - self.d / self.lambda_inv
    }

    pub fn coding(&self) -> CodingParams {
        CodingParams { d: self.d as usize, lambda_inv: self.lambda_inv as usize, payload_bytes: self.payload_bytes }
    }

    pub fn message_bytes(&self) -> usize {
        self.coding().message_bytes()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { n: self.n as i128, c: self.capacity as i128 }
    }
}

/// Height thresholds, scaled by 2n so that C/2n stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Thresholds {
    n: i128,
    c: i128,
}

impl Thresholds {
    pub fn new(n: usize, capacity: u64) -> Thresholds {
        Thresholds { n: n as i128, c: capacity as i128 }
    }

    /// `2n·τ` where τ = C/2n − 2n is the minimum gap for an internal transfer.
    fn scaled_gap(&self) -> i128 {
        self.c - 4 * self.n * self.n
    }

    /// Sender inserts when H_v < C + 2n − C/2n.
    pub fn sender_inserts(&self, h_v: u64) -> bool {
        2 * self.n * (h_v as i128) < 2 * self.n * self.c + 4 * self.n * self.n - self.c
    }

    /// Receiver accepts when H_v > C/2n − 2n.
    pub fn receiver_accepts(&self, h_v: u64) -> bool {
        2 * self.n * h_v as i128 > self.scaled_gap()
    }

    /// Internal send when H_old > H_v − 2n + C/2n.
    pub fn internal_sends(&self, h_old: u64, h_v: u64) -> bool {
        2 * self.n * (h_old as i128 - h_v as i128) > self.scaled_gap()
    }

    /// Internal receive when H_old < H_v + 2n − C/2n.
    pub fn internal_receives(&self, h_old: u64, h_v: u64) -> bool {
        2 * self.n * (h_v as i128 - h_old as i128) > self.scaled_gap()
    }

    /// τ as an exact fraction (numerator, denominator).
    pub fn tau(&self) -> (i128, i128) {
        (self.scaled_gap(), 2 * self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // n=4, C=384: C/2n = 48, so the sender inserts below 344, the receiver
    // accepts above 40, and internal transfers need a gap above 40.
    #[test]
    fn worked_thresholds() {
        let t = Thresholds::new(4, 384);
        assert!(t.sender_inserts(343));
        assert!(!t.sender_inserts(344));
        assert!(t.receiver_accepts(41));
        assert!(!t.receiver_accepts(40));
        assert!(t.internal_sends(100, 50));
        assert!(t.internal_sends(91, 50));
        assert!(!t.internal_sends(90, 50));
        assert!(t.internal_receives(50, 100));
        assert!(!t.internal_receives(60, 100));
        assert!(!t.internal_sends(60, 50) && !t.internal_receives(60, 50));
        assert_eq!(t.tau(), (320, 8));
    }

    #[test]
    fn fractional_threshold() {
        // n=4, C=196: C/2n = 24.5, τ = 16.5. A gap of 17 transfers, 16 does not.
        let t = Thresholds::new(4, 196);
        assert!(t.internal_sends(17, 0));
        assert!(!t.internal_sends(16, 0));
        assert!(t.receiver_accepts(17));
        assert!(!t.receiver_accepts(16));
        // C + 2n − C/2n = 196 + 8 − 24.5 = 179.5
        assert!(t.sender_inserts(179));
        assert!(!t.sender_inserts(180));
    }

    #[test]
    fn endpoint_rules_match_internal_rules() {
        // An internal node facing the Sender (height C) or the Receiver
        // (height 0) must reach the same verdict as the endpoint.
        for (n, c) in [(4usize, 192u64), (5, 300), (6, 432), (8, 768)] {
            let t = Thresholds::new(n, c);
            for h in 0..=c {
                assert_eq!(t.sender_inserts(h), t.internal_receives(h, c), "n={n} c={c} h={h}");
                assert_eq!(t.receiver_accepts(h), t.internal_sends(h, 0), "n={n} c={c} h={h}");
            }
        }
    }
}
