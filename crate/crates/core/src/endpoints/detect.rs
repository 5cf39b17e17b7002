//! Localizing a corrupt node from the testimonies of a failed transmission.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::reconcile::{reconcile_status, Claim, Reconciled};
use crate::crypto::{CryptoError, HeContext, HeVector};
use crate::model::{EdgeRecord, NodeId, Params, TestimonyParcel};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("no node shows a transfer imbalance")]
    NoImbalanceFound,
    #[error("no node violates the parcel-count identity")]
    NoViolatorFound,
    #[error("testimony of {0} is incomplete")]
    MissingTestimony(NodeId),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// One direction of an edge as seen by one endpoint, decrypted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainDir {
    pub count: u64,
    pub sender_heights: u64,
    pub receiver_heights: u64,
    pub psi: Vec<i128>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainEdge {
    pub stamp: u64,
    /// Transfers owner → peer.
    pub out: PlainDir,
    /// Transfers peer → owner.
    pub inn: PlainDir,
}

/// A node's decrypted testimony for one transmission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainTestimony {
    pub owner: NodeId,
    pub psi_node: Vec<i128>,
    pub edges: BTreeMap<NodeId, PlainEdge>,
}

/// Maps `v ∈ Z_N` to its representative in (−N/2, N/2].
pub fn signed(v: u64, modulus: u64) -> i128 {
    if v > modulus / 2 {
        v as i128 - modulus as i128
    } else {
        v as i128
    }
}

fn decrypt_signed(he: &HeContext, v: &HeVector) -> Result<Vec<i128>, CryptoError> {
    Ok(he.decrypt(v)?.into_iter().map(|x| signed(x, he.modulus())).collect())
}

fn plain_dir(he: &HeContext, r: &crate::model::DirRecord) -> Result<PlainDir, CryptoError> {
    Ok(PlainDir {
        count: r.count,
        sender_heights: r.sender_heights,
        receiver_heights: r.receiver_heights,
        psi: decrypt_signed(he, &r.psi)?,
    })
}

/// Decrypts `owner`'s final records and Ψ_owner.
pub fn decrypt_records(
    he: &HeContext,
    owner: NodeId,
    records: &[EdgeRecord],
    psi_node: &HeVector,
) -> Result<PlainTestimony, CryptoError> {
    let mut edges = BTreeMap::new();
    for r in records {
        if r.lo != owner && r.hi != owner {
            continue;
        }
        let peer = r.other(owner);
        edges.insert(
            peer,
            PlainEdge { stamp: r.stamp, out: plain_dir(he, r.dir(owner))?, inn: plain_dir(he, r.dir(peer))? },
        );
    }
    Ok(PlainTestimony { owner, psi_node: decrypt_signed(he, psi_node)?, edges })
}

/// Assembles one owner's testimony parcels. A node whose parcels disagree on
/// Ψ_owner, or that describe edges it is not on, has contradicted itself:
/// `Err(owner)`.
pub fn assemble_testimony(
    he: &HeContext,
    owner: NodeId,
    parcels: &[std::sync::Arc<TestimonyParcel>],
) -> Result<PlainTestimony, NodeId> {
    let Some(first) = parcels.first() else { return Err(owner) };
    let mut records = Vec::with_capacity(parcels.len());
    for p in parcels {
        let r = &p.entry.record;
        if p.owner != owner
            || p.entry.psi_node != first.entry.psi_node
            || (r.lo != owner && r.hi != owner)
            || r.other(owner) != p.entry.peer
        {
            return Err(owner);
        }
        records.push(r.clone());
    }
    decrypt_records(he, owner, &records, &first.entry.psi_node).map_err(|_| owner)
}

/// Σ_v Φ_{u,v} − Σ_v Φ_{v,u}, reported alongside the F2 verdict.
pub fn phi_imbalance(t: &PlainTestimony) -> i128 {
    let out: i128 = t.edges.values().map(|e| e.out.sender_heights as i128 - e.out.receiver_heights as i128).sum();
    let inn: i128 = t.edges.values().map(|e| e.inn.sender_heights as i128 - e.inn.receiver_heights as i128).sum();
    out - inn
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum F2Finding {
    /// Sent more parcels than it ever received.
    CountExcess { node: NodeId, sent: u64, received: u64 },
    /// Its own advertised heights over its transfers are impossible for a
    /// node that stores what it receives and deletes what it sends.
    HeightExcess { node: NodeId, excess: i128, bound: i128 },
}

impl F2Finding {
    pub fn node(&self) -> NodeId {
        match self {
            F2Finding::CountExcess { node, .. } | F2Finding::HeightExcess { node, .. } => *node,
        }
    }
}

/// Localizes the node behind an inconsistency failure.
///
/// An honest internal node never sends more than it received. Listing its
/// transfers in time order, its height before a send is one above the
/// height before the receive that brought that parcel in, so
/// Σ_send H − Σ_recv (H + 1) ≤ 0 when each transfer uses the true height.
/// The height it advertised was read at the previous activation of the same
/// edge; every transfer on another edge in between shifts it by one, and each
/// transfer can shift at most n − 2 such pending reads. The bound used is
/// therefore (n − 1)·T_u for T_u transfers.
pub fn detect_f2(params: &Params, testimonies: &BTreeMap<NodeId, PlainTestimony>) -> Result<F2Finding, DetectError> {
    let n = params.n as i128;
    for t in testimonies.values() {
        if params.role(t.owner) != crate::model::Role::Internal {
            continue;
        }
        let sent: u64 = t.edges.values().map(|e| e.out.count).sum();
        let received: u64 = t.edges.values().map(|e| e.inn.count).sum();
        if sent > received {
            return Ok(F2Finding::CountExcess { node: t.owner, sent, received });
        }
        let adv_send: i128 = t.edges.values().map(|e| e.out.sender_heights as i128).sum();
        let adv_recv: i128 = t.edges.values().map(|e| e.inn.receiver_heights as i128 + e.inn.count as i128).sum();
        let excess = adv_send - adv_recv;
        let bound = (n - 1) * (sent + received) as i128;
        if excess > bound {
            return Ok(F2Finding::HeightExcess { node: t.owner, excess, bound });
        }
    }
    Err(DetectError::NoImbalanceFound)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum F3Finding {
    /// The two endpoints of an edge disagree beyond one transfer.
    Reconcile { node: NodeId },
    /// Claims to hold a negative count of some set, or more than C parcels.
    Holdings { node: NodeId },
    /// Ψ_u + Σ_v (Ψ_{u,v} − Ψ_{v,u}) ≠ 0.
    Identity { node: NodeId, residual: Vec<i128> },
}

impl F3Finding {
    pub fn node(&self) -> NodeId {
        match self {
            F3Finding::Reconcile { node } | F3Finding::Holdings { node } | F3Finding::Identity { node, .. } => *node,
        }
    }
}

/// Ψ_u + Σ_v (Ψ_{u,v} − Ψ_{v,u}) for one testimony.
pub fn identity_residual(t: &PlainTestimony) -> Vec<i128> {
    let mut acc = t.psi_node.clone();
    for e in t.edges.values() {
        for (i, a) in acc.iter_mut().enumerate() {
            *a += e.out.psi[i] - e.inn.psi[i];
        }
    }
    acc
}

/// Localizes the node behind a failure in which too few distinct parcels
/// reached the Receiver. Testimonies are reconciled pairwise first.
pub fn detect_f3(params: &Params, testimonies: &BTreeMap<NodeId, PlainTestimony>) -> Result<F3Finding, DetectError> {
    let mut t = testimonies.clone();
    let ids: Vec<NodeId> = t.keys().copied().collect();
    for (i, &u) in ids.iter().enumerate() {
        for &v in &ids[i + 1..] {
            for (from, to) in [(u, v), (v, u)] {
                let (Some(fe), Some(te)) = (t[&from].edges.get(&to), t[&to].edges.get(&from)) else { continue };
                let fc = Claim { psi: fe.out.psi.clone(), stamp: fe.stamp };
                let tc = Claim { psi: te.inn.psi.clone(), stamp: te.stamp };
                match reconcile_status(from, to, &fc, &tc) {
                    Reconciled::Eliminate(x) => return Ok(F3Finding::Reconcile { node: x }),
                    Reconciled::Consistent { value, adjust } => {
                        t.get_mut(&from).unwrap().edges.get_mut(&to).unwrap().out.psi = value.clone();
                        t.get_mut(&to).unwrap().edges.get_mut(&from).unwrap().inn.psi = value;
                        if let Some((w, delta)) = adjust {
                            for (a, d) in t.get_mut(&w).unwrap().psi_node.iter_mut().zip(delta) {
                                *a += d;
                            }
                        }
                    }
                }
            }
        }
    }
    let internal = || t.values().filter(|x| params.role(x.owner) == crate::model::Role::Internal);
    for x in internal() {
        let l1: i128 = x.psi_node.iter().map(|v| v.abs()).sum();
        if x.psi_node.iter().any(|&v| v < 0) || l1 > params.capacity as i128 {
            return Ok(F3Finding::Holdings { node: x.owner });
        }
    }
    for x in internal() {
        let residual = identity_residual(x);
        if residual.iter().any(|&v| v != 0) {
            return Ok(F3Finding::Identity { node: x.owner, residual });
        }
    }
    Err(DetectError::NoViolatorFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params {
            n: 4,
            capacity: 192,
            bandwidth_bits: 8192,
            k: 3,
            lambda_inv: 2,
            d: 64,
            modulus: 12289,
            payload_bytes: 8,
            horizon: 100,
        }
    }

    fn dir(count: u64, sh: u64, rh: u64, psi: &[i128]) -> PlainDir {
        PlainDir { count, sender_heights: sh, receiver_heights: rh, psi: psi.to_vec() }
    }

    fn edge(out: PlainDir, inn: PlainDir) -> PlainEdge {
        PlainEdge { stamp: 10, out, inn }
    }

    /// Line S(0) – 1 – 2 – R(3); node 1 received 3 parcels (sets 0,1,1)
    /// and forwarded 2 (sets 0,1). Node 2 forwarded both to R.
    fn honest() -> BTreeMap<NodeId, PlainTestimony> {
        let z = [0, 0, 0];
        let mut m = BTreeMap::new();
        let mut e1 = BTreeMap::new();
        e1.insert(NodeId(0), edge(dir(0, 0, 0, &z), dir(3, 576, 3, &[1, 2, 0])));
        e1.insert(NodeId(2), edge(dir(2, 4, 0, &[1, 1, 0]), dir(0, 0, 0, &z)));
        m.insert(NodeId(1), PlainTestimony { owner: NodeId(1), psi_node: vec![0, 1, 0], edges: e1 });
        let mut e2 = BTreeMap::new();
        e2.insert(NodeId(1), edge(dir(0, 0, 0, &z), dir(2, 4, 0, &[1, 1, 0])));
        e2.insert(NodeId(3), edge(dir(2, 1, 0, &[1, 1, 0]), dir(0, 0, 0, &z)));
        m.insert(NodeId(2), PlainTestimony { owner: NodeId(2), psi_node: vec![0, 0, 0], edges: e2 });
        m
    }

    #[test]
    fn honest_control_cases() {
        assert_eq!(detect_f3(&params(), &honest()), Err(DetectError::NoViolatorFound));
        assert_eq!(detect_f2(&params(), &honest()), Err(DetectError::NoImbalanceFound));
    }

    #[test]
    fn understated_holdings_break_identity() {
        let mut t = honest();
        t.get_mut(&NodeId(1)).unwrap().psi_node = vec![1, 0, 0];
        let f = detect_f3(&params(), &t).unwrap();
        assert_eq!(f, F3Finding::Identity { node: NodeId(1), residual: vec![1, -1, 0] });
    }

    #[test]
    fn negative_holdings() {
        let mut t = honest();
        let x = t.get_mut(&NodeId(2)).unwrap();
        x.psi_node = vec![0, -1, 1];
        assert_eq!(detect_f3(&params(), &t).unwrap(), F3Finding::Holdings { node: NodeId(2) });
    }

    #[test]
    fn duplication_is_count_excess() {
        let mut t = honest();
        let e = t.get_mut(&NodeId(2)).unwrap().edges.get_mut(&NodeId(3)).unwrap();
        e.out.count = 3;
        assert_eq!(detect_f2(&params(), &t).unwrap().node(), NodeId(2));
    }

    #[test]
    fn uphill_is_height_excess() {
        let mut t = honest();
        let e = t.get_mut(&NodeId(2)).unwrap().edges.get_mut(&NodeId(3)).unwrap();
        e.out.sender_heights = 400;
        let f = detect_f2(&params(), &t).unwrap();
        assert!(matches!(f, F2Finding::HeightExcess { node: NodeId(2), .. }));
    }

    #[test]
    fn signed_representatives() {
        assert_eq!(signed(3, 11), 3);
        assert_eq!(signed(5, 11), 5);
        assert_eq!(signed(6, 11), -5);
        assert_eq!(signed(10, 11), -1);
    }
}
