//! The interface through which a corrupted node deviates.
//!
//! A strategy sees the node's own state (its buffer, its edge records, its own
//! signing capability through the node) and nothing else: no HE secret key,
//! no other node's signing key. Every deviation is applied by the node's
//! state machine, so outgoing packets stay well-formed and signed.

use std::sync::Arc;

use crate::crypto::HeVector;
use crate::model::{CodewordParcel, Height, NodeId};
use crate::node::{NodeState, Snapshot};

pub enum CodewordChoice {
    /// Uniform choice from the buffer, as an honest node would.
    Honest,
    /// Offer this parcel (a retained copy, not necessarily in the buffer).
    Copy(Arc<CodewordParcel>),
    /// Offer nothing.
    Nothing,
}

pub trait Strategy {
    fn name(&self) -> &'static str;

    /// Height to advertise to `peer`. `honest` is what the protocol would send.
    fn advertise(&mut self, _node: &NodeState, _peer: NodeId, honest: Height) -> Height {
        honest
    }

    /// Called after a parcel was accepted from `peer`; `false` discards it.
    fn keep_received(&mut self, _node: &NodeState, _peer: NodeId, _parcel: &Arc<CodewordParcel>) -> bool {
        true
    }

    /// Called after `parcel` was handed to `peer`; `true` keeps a copy.
    fn keep_sent(&mut self, _node: &NodeState, _peer: NodeId, _parcel: &Arc<CodewordParcel>) -> bool {
        false
    }

    fn choose(&mut self, _node: &NodeState, _peer: NodeId) -> CodewordChoice {
        CodewordChoice::Honest
    }

    /// Ψ_u claimed in testimony.
    fn testimony_psi(&mut self, _node: &NodeState, snapshot: &Snapshot) -> HeVector {
        snapshot.psi_node.clone()
    }

    /// Whether the node keeps exchanging codeword parcels after Φ_u > kCD.
    fn ignores_halt(&self) -> bool {
        true
    }

    /// White-box strategies receive the Sender's secret set assignment. Only
    /// scenarios that opt into cheat injection wire this up.
    fn wants_chi(&self) -> bool {
        false
    }

    fn observe_chi(&mut self, _transmission: u64, _chi: &Arc<Vec<u16>>) {}
}

/// The identity strategy: behaves exactly like an honest node.
pub struct ProtocolHonest;

impl Strategy for ProtocolHonest {
    fn name(&self) -> &'static str {
        "protocol-honest"
    }

    fn ignores_halt(&self) -> bool {
        false
    }
}
