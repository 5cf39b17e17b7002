//! Concrete deviations available to corrupted nodes.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::strategy::{CodewordChoice, Strategy};
use crate::crypto::HeVector;
use crate::model::{CodewordParcel, Height, NodeId, Role, TransmissionId};
use crate::node::{NodeState, Snapshot};

/// Ψ_in − Ψ_out over the snapshot's edges: the holdings claim that keeps the
/// node's own identity balanced whatever it actually did.
fn balanced_claim(node: &NodeState, snap: &Snapshot) -> HeVector {
    let he = node.he();
    let mut acc = he.zero();
    for r in &snap.records {
        let peer = r.other(node.id);
        he.add_assign(&mut acc, &r.dir(peer).psi).expect("context");
        acc = he.sub(&acc, &r.dir(node.id).psi).expect("context");
    }
    acc
}

/// Pool of parcels the node has already forwarded in the live transmission.
#[derive(Default)]
struct Pool {
    transmission: TransmissionId,
    parcels: Vec<Arc<CodewordParcel>>,
}

impl Pool {
    fn sync(&mut self, tid: TransmissionId) {
        if self.transmission != tid {
            self.transmission = tid;
            self.parcels.clear();
        }
    }

    fn contains(&self, p: &Arc<CodewordParcel>) -> bool {
        self.parcels.iter().any(|q| Arc::ptr_eq(q, p))
    }
}

/// Discards fresh parcels and forwards copies of old ones instead.
pub struct Replacement {
    pool: Pool,
    /// Advertised height; defaults to C/2.
    h_star: Option<u64>,
    /// Maximum number of parcels to discard per transmission.
    budget: Option<u64>,
    discarded: u64,
    white_box: bool,
    chi: Option<(TransmissionId, Arc<Vec<u16>>)>,
    /// White-box only: discarded-but-unreplaced parcels per set.
    debts: HashMap<u16, u64>,
    rng: ChaCha8Rng,
}

impl Replacement {
    pub fn new(h_star: Option<u64>, budget: Option<u64>, white_box: bool, seed: u64) -> Replacement {
        Replacement {
            pool: Pool::default(),
            h_star,
            budget,
            discarded: 0,
            white_box,
            chi: None,
            debts: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn sync(&mut self, tid: TransmissionId) {
        if self.pool.transmission != tid {
            self.discarded = 0;
            self.debts.clear();
        }
        self.pool.sync(tid);
    }

    fn set_of(&self, p: &CodewordParcel) -> Option<u16> {
        match &self.chi {
            Some((t, chi)) if *t == p.transmission => chi.get(p.index as usize).copied(),
            _ => None,
        }
    }
}

impl Strategy for Replacement {
    fn name(&self) -> &'static str {
        if self.white_box {
            "replacement-white-box"
        } else {
            "replacement"
        }
    }

    fn advertise(&mut self, node: &NodeState, _peer: NodeId, honest: Height) -> Height {
        self.sync(node.transmission);
        if honest == Height::Halt && !node.halted {
            return Height::Halt;
        }
        if self.white_box {
            let debts: u64 = self.debts.values().sum();
            return Height::Value(node.height() + debts);
        }
        Height::Value(self.h_star.unwrap_or(node.params().capacity / 2))
    }

    fn keep_received(&mut self, node: &NodeState, _peer: NodeId, parcel: &Arc<CodewordParcel>) -> bool {
        self.sync(node.transmission);
        if self.pool.parcels.is_empty() || self.budget.is_some_and(|b| self.discarded >= b) {
            return true;
        }
        if self.white_box {
            let Some(s) = self.set_of(parcel) else { return true };
            if !self.pool.parcels.iter().any(|q| self.set_of(q) == Some(s)) {
                return true;
            }
            *self.debts.entry(s).or_default() += 1;
        }
        self.discarded += 1;
        false
    }

    fn keep_sent(&mut self, node: &NodeState, _peer: NodeId, parcel: &Arc<CodewordParcel>) -> bool {
        self.sync(node.transmission);
        if self.pool.contains(parcel) {
            if let Some(s) = self.set_of(parcel) {
                if let Some(d) = self.debts.get_mut(&s) {
                    *d = d.saturating_sub(1);
                }
            }
        } else {
            self.pool.parcels.push(parcel.clone());
        }
        false
    }

    fn choose(&mut self, node: &NodeState, _peer: NodeId) -> CodewordChoice {
        self.sync(node.transmission);
        if node.buffer.len() > node.buffer.outstanding() {
            return CodewordChoice::Honest;
        }
        if self.white_box {
            let owed: Vec<&Arc<CodewordParcel>> = self
                .pool
                .parcels
                .iter()
                .filter(|q| self.set_of(q).is_some_and(|s| self.debts.get(&s).is_some_and(|&d| d > 0)))
                .collect();
            if owed.is_empty() {
                return CodewordChoice::Nothing;
            }
            return CodewordChoice::Copy(owed[self.rng.gen_range(0..owed.len())].clone());
        }
        if self.pool.parcels.is_empty() {
            return CodewordChoice::Nothing;
        }
        let i = self.rng.gen_range(0..self.pool.parcels.len());
        CodewordChoice::Copy(self.pool.parcels[i].clone())
    }

    fn testimony_psi(&mut self, node: &NodeState, snapshot: &Snapshot) -> HeVector {
        balanced_claim(node, snapshot)
    }

    fn wants_chi(&self) -> bool {
        self.white_box
    }

    fn observe_chi(&mut self, transmission: u64, chi: &Arc<Vec<u16>>) {
        self.chi = Some((transmission, chi.clone()));
    }
}

/// Collects `pool_target` parcels, then advertises C and re-sends them while
/// keeping every copy.
pub struct Duplication {
    pool_target: u64,
}

impl Duplication {
    pub fn new(pool_target: u64) -> Duplication {
        Duplication { pool_target: pool_target.max(1) }
    }
}

impl Strategy for Duplication {
    fn name(&self) -> &'static str {
        "duplication"
    }

    fn advertise(&mut self, node: &NodeState, _peer: NodeId, honest: Height) -> Height {
        if honest == Height::Halt && !node.halted {
            return Height::Halt;
        }
        if node.height() >= self.pool_target {
            Height::Value(node.params().capacity)
        } else {
            Height::Value(0)
        }
    }

    fn keep_sent(&mut self, _node: &NodeState, _peer: NodeId, _parcel: &Arc<CodewordParcel>) -> bool {
        true
    }
}

/// Pulls parcels from both endpoints' sides and pumps them back and forth
/// with internal neighbors against the gradient.
#[derive(Default)]
pub struct Uphill {
    toggles: HashMap<NodeId, bool>,
}

impl Uphill {
    pub fn new() -> Uphill {
        Uphill::default()
    }
}

impl Strategy for Uphill {
    fn name(&self) -> &'static str {
        "uphill"
    }

    fn advertise(&mut self, node: &NodeState, peer: NodeId, honest: Height) -> Height {
        if honest == Height::Halt && !node.halted {
            return Height::Halt;
        }
        if node.params().role(peer) != Role::Internal {
            return Height::Value(0);
        }
        let t = self.toggles.entry(peer).or_default();
        *t = !*t;
        Height::Value(if *t { node.params().capacity } else { 0 })
    }
}

/// Advertises uniformly random heights in [0, 2C].
pub struct HeightLying {
    rng: ChaCha8Rng,
}

impl HeightLying {
    pub fn new(seed: u64) -> HeightLying {
        HeightLying { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Strategy for HeightLying {
    fn name(&self) -> &'static str {
        "height-lying"
    }

    fn advertise(&mut self, node: &NodeState, _peer: NodeId, honest: Height) -> Height {
        if honest == Height::Halt && !node.halted {
            return Height::Halt;
        }
        Height::Value(self.rng.gen_range(0..=2 * node.params().capacity))
    }
}

/// Accepts parcels and throws them away.
pub struct Dropping;

impl Strategy for Dropping {
    fn name(&self) -> &'static str {
        "dropping"
    }

    fn keep_received(&mut self, _node: &NodeState, _peer: NodeId, _parcel: &Arc<CodewordParcel>) -> bool {
        false
    }
}
