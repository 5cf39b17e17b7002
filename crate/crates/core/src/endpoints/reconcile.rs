//! Pairwise reconciliation of the two endpoints' claims about one edge.

use serde::{Deserialize, Serialize};

use crate::model::NodeId;

/// One endpoint's decrypted claim of Ψ for a directed edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Claim {
    pub psi: Vec<i128>,
    /// Round of the claimant's last update of the edge.
    pub stamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reconciled {
    /// Both claims now equal `value`. `adjust` names a node whose Ψ_w must
    /// be shifted by the given vector to keep its identity intact.
    Consistent { value: Vec<i128>, adjust: Option<(NodeId, Vec<i128>)> },
    Eliminate(NodeId),
}

/// Number of coordinates in which two claims differ.
pub fn hamming(a: &[i128], b: &[i128]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Reconciles the sending endpoint's claim `from_claim` with the receiving
/// endpoint's claim `to_claim` of Ψ for transfers `from → to`.
///
/// Distance above one means someone lied: the staler claimant is eliminated,
/// or the smaller id when the stamps tie. Distance one is a single transfer
/// the staler side missed; its claim is brought forward and its Ψ_w shifted
/// so Ψ_w plus its edge balance stays the same. Ties favor the receiver.
pub fn reconcile_status(from: NodeId, to: NodeId, from_claim: &Claim, to_claim: &Claim) -> Reconciled {
    let d = hamming(&from_claim.psi, &to_claim.psi);
    if d == 0 {
        return Reconciled::Consistent { value: from_claim.psi.clone(), adjust: None };
    }
    if d > 1 {
        let stale = match from_claim.stamp.cmp(&to_claim.stamp) {
            std::cmp::Ordering::Less => from,
            std::cmp::Ordering::Greater => to,
            std::cmp::Ordering::Equal => from.min(to),
        };
        return Reconciled::Eliminate(stale);
    }
    let receiver_current = to_claim.stamp >= from_claim.stamp;
    let (fresh, stale) = if receiver_current { (to_claim, from_claim) } else { (from_claim, to_claim) };
    let diff: Vec<i128> = fresh.psi.iter().zip(&stale.psi).map(|(f, s)| f - s).collect();
    let adjust = if receiver_current {
        // the sender's out-count grows, so its held count shrinks
        (from, diff.iter().map(|x| -x).collect())
    } else {
        (to, diff)
    };
    Reconciled::Consistent { value: fresh.psi.clone(), adjust: Some(adjust) }
}

#[cfg(test)]
mod tests {
    use super::*;

    const U: NodeId = NodeId(1);
    const V: NodeId = NodeId(2);

    fn c(psi: &[i128], stamp: u64) -> Claim {
        Claim { psi: psi.to_vec(), stamp }
    }

    #[test]
    fn identical_claims() {
        let r = reconcile_status(U, V, &c(&[1, 2, 0], 5), &c(&[1, 2, 0], 7));
        assert_eq!(r, Reconciled::Consistent { value: vec![1, 2, 0], adjust: None });
    }

    #[test]
    fn one_coordinate_sender_fresher() {
        // u sent one more parcel of set 2 than v recorded; v's Ψ_v grows by it
        let r = reconcile_status(U, V, &c(&[1, 3, 0], 9), &c(&[1, 2, 0], 4));
        assert_eq!(r, Reconciled::Consistent { value: vec![1, 3, 0], adjust: Some((V, vec![0, 1, 0])) });
    }

    #[test]
    fn one_coordinate_receiver_fresher() {
        let r = reconcile_status(U, V, &c(&[1, 2, 0], 4), &c(&[1, 3, 0], 9));
        assert_eq!(r, Reconciled::Consistent { value: vec![1, 3, 0], adjust: Some((U, vec![0, -1, 0])) });
    }

    #[test]
    fn tie_goes_to_receiver() {
        let r = reconcile_status(U, V, &c(&[0, 0, 5], 6), &c(&[0, 0, 4], 6));
        assert_eq!(r, Reconciled::Consistent { value: vec![0, 0, 4], adjust: Some((U, vec![0, 0, 1])) });
    }

    #[test]
    fn two_coordinates_eliminate_staler() {
        assert_eq!(reconcile_status(U, V, &c(&[2, 3, 0], 9), &c(&[1, 2, 0], 4)), Reconciled::Eliminate(V));
        assert_eq!(reconcile_status(U, V, &c(&[2, 3, 0], 3), &c(&[1, 2, 0], 4)), Reconciled::Eliminate(U));
        assert_eq!(reconcile_status(V, U, &c(&[2, 3, 0], 4), &c(&[1, 2, 0], 4)), Reconciled::Eliminate(U));
    }
}
