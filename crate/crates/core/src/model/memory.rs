//! Exact accounting of what a node stores.

use serde::{Deserialize, Serialize};

use super::{Params, Role};
use crate::node::NodeState;

/// Parcel counts and encoded sizes of one node's stored state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLedger {
    pub codeword_parcels_stored: u64,
    pub alert_parcels: u64,
    pub status_parcels: u64,
    pub testimony_parcels: u64,
    pub potential_parcels: u64,
    pub codeword_bits: u64,
    pub control_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{what}: {count} stored, limit {limit}")]
pub struct MemoryViolation {
    pub what: &'static str,
    pub count: u64,
    pub limit: u64,
}

impl MemoryLedger {
    pub fn control_parcels(&self) -> u64 {
        self.alert_parcels + self.status_parcels + self.testimony_parcels + self.potential_parcels
    }

    pub fn total_bits(&self) -> u64 {
        self.codeword_bits + self.control_bits
    }

    /// Componentwise maximum, for run-wide peaks.
    pub fn max_with(&mut self, other: &MemoryLedger) {
        self.codeword_parcels_stored = self.codeword_parcels_stored.max(other.codeword_parcels_stored);
        self.alert_parcels = self.alert_parcels.max(other.alert_parcels);
        self.status_parcels = self.status_parcels.max(other.status_parcels);
        self.testimony_parcels = self.testimony_parcels.max(other.testimony_parcels);
        self.potential_parcels = self.potential_parcels.max(other.potential_parcels);
        self.codeword_bits = self.codeword_bits.max(other.codeword_bits);
        self.control_bits = self.control_bits.max(other.control_bits);
    }

    /// Checks the per-category limits. The Sender's pending codeword and the
    /// Receiver's decode set are not buffer contents and are exempt from C.
    pub fn check(&self, params: &Params, role: Role) -> Result<(), MemoryViolation> {
        let n = params.n as u64;
        let mut limits = vec![
            ("alert parcels", self.alert_parcels, 2 * n),
            ("status parcels", self.status_parcels, n),
            ("testimony parcels", self.testimony_parcels, n * n),
            ("potential parcels", self.potential_parcels, n),
        ];
        if role == Role::Internal {
            limits.push(("codeword parcels", self.codeword_parcels_stored, params.capacity));
        }
        for (what, count, limit) in limits {
            if count > limit {
                return Err(MemoryViolation { what, count, limit });
            }
        }
        Ok(())
    }
}

pub fn audit_memory(state: &NodeState) -> MemoryLedger {
    state.memory()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params { n: 4, capacity: 192, bandwidth_bits: 8192, k: 4, lambda_inv: 4, d: 256, modulus: 12289, payload_bytes: 8, horizon: 1000 }
    }

    #[test]
    fn limits_are_inclusive() {
        let p = params();
        let at = MemoryLedger { codeword_parcels_stored: 192, alert_parcels: 8, status_parcels: 4, testimony_parcels: 16, potential_parcels: 4, ..Default::default() };
        at.check(&p, Role::Internal).unwrap();
        let over = MemoryLedger { codeword_parcels_stored: 193, ..at.clone() };
        assert_eq!(over.check(&p, Role::Internal), Err(MemoryViolation { what: "codeword parcels", count: 193, limit: 192 }));
        over.check(&p, Role::Sender).unwrap();
        let status = MemoryLedger { status_parcels: 5, ..at };
        assert_eq!(status.check(&p, Role::Receiver).unwrap_err().what, "status parcels");
    }

    #[test]
    fn max_with_is_componentwise() {
        let mut a = MemoryLedger { alert_parcels: 3, codeword_bits: 10, ..Default::default() };
        let b = MemoryLedger { alert_parcels: 1, status_parcels: 2, control_bits: 7, ..Default::default() };
        a.max_with(&b);
        assert_eq!((a.alert_parcels, a.status_parcels, a.codeword_bits, a.control_bits), (3, 2, 10, 7));
        assert_eq!(a.control_parcels(), 5);
        assert_eq!(a.total_bits(), 17);
    }
}
