//! Parcels and the packet that bundles them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::wire;
use super::{NodeId, Outcome, TransmissionId};
use crate::crypto::{HeContext, HeVector, Keyring, Signature, SigningKey};

/// Advertised height, or ⊥ when the emitter will not exchange codeword parcels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Height {
    Value(u64),
    Halt,
}

impl Height {
    pub fn value(self) -> Option<u64> {
        match self {
            Height::Value(h) => Some(h),
            Height::Halt => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodewordParcel {
    pub transmission: TransmissionId,
    pub message_seq: u64,
    pub index: u32,
    pub payload: Vec<u8>,
    /// E(χ(p)); travels with the parcel.
    pub tag: HeVector,
    pub signature: Signature,
}

impl CodewordParcel {
    pub fn signing_bytes(&self, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_CODEWORD);
        wire::put_codeword_body(out, self);
    }

    pub fn verify(&self, ring: &Keyring, sender: NodeId, scratch: &mut Vec<u8>) -> bool {
        self.signing_bytes(scratch);
        ring.verify(sender, scratch, &self.signature)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertOrigin {
    Sender,
    Receiver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeFlag {
    Clear,
    Blacklisted(TransmissionId),
    Eliminated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    /// Outcome of the previous transmission; `None` for the first one.
    PrevStatus(Option<Outcome>),
    FailedStamp(TransmissionId),
    NodeFlag { node: NodeId, flag: NodeFlag },
    /// Replaces a node's flag slot once its testimony is complete.
    BlacklistRemoval { node: NodeId },
    ReceiverDecoded { message_seq: u64 },
    ReceiverInconsistent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlertParcel {
    pub origin: AlertOrigin,
    pub transmission: TransmissionId,
    pub index: u16,
    pub total: u16,
    /// Later versions of the same slot supersede earlier ones.
    pub version: u32,
    pub kind: AlertKind,
    pub signature: Signature,
}

impl AlertParcel {
    pub fn signing_bytes(&self, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_ALERT);
        wire::put_alert_body(out, self);
    }

    pub fn signed(mut self, key: &SigningKey, scratch: &mut Vec<u8>) -> AlertParcel {
        self.signing_bytes(scratch);
        self.signature = key.sign(scratch);
        self
    }

    pub fn verify(&self, ring: &Keyring, signer: NodeId, scratch: &mut Vec<u8>) -> bool {
        self.signing_bytes(scratch);
        ring.verify(signer, scratch, &self.signature)
    }
}

/// Per-direction transfer totals on one edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirRecord {
    pub count: u64,
    /// Σ of the sending endpoint's advertised heights over transfers.
    pub sender_heights: u64,
    /// Σ of the receiving endpoint's advertised heights over transfers.
    pub receiver_heights: u64,
    /// Obfuscated count Ψ: Σ E(χ(p)) over transferred parcels.
    pub psi: HeVector,
}

impl DirRecord {
    pub fn zero(ctx: &HeContext) -> DirRecord {
        DirRecord { count: 0, sender_heights: 0, receiver_heights: 0, psi: ctx.zero() }
    }

    /// Net potential drop Φ in this direction.
    pub fn phi(&self) -> u64 {
        self.sender_heights.saturating_sub(self.receiver_heights)
    }
}

/// The status of an edge, stored in canonical orientation `lo < hi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub lo: NodeId,
    pub hi: NodeId,
    pub transmission: TransmissionId,
    /// Round of the last change.
    pub stamp: u64,
    /// Transfers lo → hi.
    pub up: DirRecord,
    /// Transfers hi → lo.
    pub down: DirRecord,
}

impl EdgeRecord {
    pub fn new(a: NodeId, b: NodeId, transmission: TransmissionId, ctx: &HeContext) -> EdgeRecord {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        EdgeRecord { lo, hi, transmission, stamp: 0, up: DirRecord::zero(ctx), down: DirRecord::zero(ctx) }
    }

    /// Record of transfers `from → to`.
    pub fn dir(&self, from: NodeId) -> &DirRecord {
        if from == self.lo {
            &self.up
        } else {
            &self.down
        }
    }

    pub fn dir_mut(&mut self, from: NodeId) -> &mut DirRecord {
        if from == self.lo {
            &mut self.up
        } else {
            &mut self.down
        }
    }

    pub fn other(&self, me: NodeId) -> NodeId {
        if me == self.lo {
            self.hi
        } else {
            self.lo
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatusParcel {
    pub from: NodeId,
    pub record: EdgeRecord,
    pub signature: Signature,
    /// The counterparty's signature on the last record both sides agreed on.
    pub countersig: Option<Signature>,
}

impl StatusParcel {
    pub fn record_bytes(record: &EdgeRecord, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_STATUS);
        wire::put_edge_record(out, record);
    }

    pub fn verify(&self, ring: &Keyring, scratch: &mut Vec<u8>) -> bool {
        Self::record_bytes(&self.record, scratch);
        ring.verify(self.from, scratch, &self.signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PotentialParcel {
    pub node: NodeId,
    pub transmission: TransmissionId,
    /// Φ_u.
    pub phi: u64,
    pub stamp: u64,
    pub signature: Signature,
}

impl PotentialParcel {
    pub fn signing_bytes(&self, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_POTENTIAL);
        wire::put_potential_body(out, self);
    }

    pub fn verify(&self, ring: &Keyring, scratch: &mut Vec<u8>) -> bool {
        self.signing_bytes(scratch);
        ring.verify(self.node, scratch, &self.signature)
    }
}

/// One neighbor's entry of a node's testimony.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestimonyEntry {
    pub peer: NodeId,
    /// Final status of edge (owner, peer); all zero for non-neighbors.
    pub record: EdgeRecord,
    /// Ψ_u: Σ E(χ(p)) over parcels the owner held when the transmission ended.
    pub psi_node: HeVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestimonyParcel {
    pub owner: NodeId,
    pub transmission: TransmissionId,
    pub entry: TestimonyEntry,
    pub signature: Signature,
}

impl TestimonyParcel {
    pub fn signing_bytes(&self, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_TESTIMONY);
        wire::put_testimony_body(out, self);
    }

    pub fn verify(&self, ring: &Keyring, scratch: &mut Vec<u8>) -> bool {
        self.signing_bytes(scratch);
        ring.verify(self.owner, scratch, &self.signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub from: NodeId,
    pub to: NodeId,
    /// Emitter's current transmission.
    pub transmission: TransmissionId,
    pub height: Height,
    pub codeword: Option<Arc<CodewordParcel>>,
    pub alert: Option<AlertParcel>,
    pub status: Option<StatusParcel>,
    pub potential: Option<PotentialParcel>,
    pub testimony: Option<Arc<TestimonyParcel>>,
    pub signature: Signature,
}

impl Packet {
    /// The header plus the signatures of every bundled parcel; the parcel
    /// signatures bind their contents.
    pub fn signing_bytes(&self, out: &mut Vec<u8>) {
        out.clear();
        out.push(wire::DOMAIN_PACKET);
        wire::put_packet_header(out, self);
        let sigs = [
            self.codeword.as_ref().map(|c| &c.signature),
            self.alert.as_ref().map(|c| &c.signature),
            self.status.as_ref().map(|c| &c.signature),
            self.potential.as_ref().map(|c| &c.signature),
            self.testimony.as_ref().map(|c| &c.signature),
        ];
        for s in sigs {
            match s {
                Some(s) => {
                    out.push(1);
                    wire::put_sig(out, s);
                }
                None => out.push(0),
            }
        }
    }

    pub fn sign(&mut self, key: &SigningKey, scratch: &mut Vec<u8>) {
        self.signing_bytes(scratch);
        self.signature = key.sign(scratch);
    }

    pub fn verify(&self, ring: &Keyring, scratch: &mut Vec<u8>) -> bool {
        self.signing_bytes(scratch);
        ring.verify(self.from, scratch, &self.signature)
    }
}
