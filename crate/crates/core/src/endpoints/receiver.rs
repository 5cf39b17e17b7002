//! The Receiver's decode set and its alert logic.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::coding::{self, CodingParams};
use crate::crypto::{HeContext, HeVector, SigningKey};
use crate::model::{AlertKind, AlertOrigin, AlertParcel, CodewordParcel, Params, TransmissionId};
use crate::node::NodeState;

/// Parcels the Receiver has accepted in the current transmission.
#[derive(Clone, Debug)]
pub struct Sink {
    pub transmission: TransmissionId,
    parcels: BTreeMap<u32, Arc<CodewordParcel>>,
    /// Σ E(χ(p)) over every accepted parcel, duplicates included.
    pub psi: HeVector,
    pub accepted: u64,
}

impl Sink {
    pub fn new(he: &HeContext, transmission: TransmissionId) -> Sink {
        Sink { transmission, parcels: BTreeMap::new(), psi: he.zero(), accepted: 0 }
    }

    pub fn reset(&mut self, he: &HeContext, transmission: TransmissionId) {
        *self = Sink::new(he, transmission);
    }

    pub fn accept(&mut self, he: &HeContext, p: Arc<CodewordParcel>) {
        he.add_assign(&mut self.psi, &p.tag).expect("tag context");
        self.accepted += 1;
        self.parcels.entry(p.index).or_insert(p);
    }

    /// Distinct parcel indices held.
    pub fn distinct(&self) -> usize {
        self.parcels.len()
    }

    pub fn message_seq(&self) -> Option<u64> {
        self.parcels.values().next().map(|p| p.message_seq)
    }

    pub fn decode(&self, params: &CodingParams) -> Result<Vec<u8>, coding::CodingError> {
        coding::decode(self.parcels.values().map(|p| (p.index, p.payload.as_slice())), params)
    }
}

/// Whether the most recent potentials exceed kCD.
pub fn inconsistent(potentials: impl IntoIterator<Item = u64>, kcd: u64) -> bool {
    let mut sum: u128 = 0;
    for p in potentials {
        sum += p as u128;
    }
    sum > kcd as u128
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReceiverEvent {
    Decoded { transmission: TransmissionId, message_seq: u64, delivered: bool },
    Inconsistent { transmission: TransmissionId },
}

/// Receiver-side endpoint logic; runs after each of the Receiver's activations.
pub struct ReceiverCore {
    key: SigningKey,
    params: Arc<Params>,
    /// Messages output, in order.
    pub delivered: Vec<Vec<u8>>,
    alerted: Option<TransmissionId>,
    scratch: Vec<u8>,
}

impl ReceiverCore {
    pub fn new(key: SigningKey, params: Arc<Params>) -> ReceiverCore {
        ReceiverCore { key, params, delivered: Vec::new(), alerted: None, scratch: Vec::new() }
    }

    /// Raises at most one alert per transmission.
    pub fn step(&mut self, node: &mut NodeState) -> Option<ReceiverEvent> {
        let tid = node.transmission;
        if tid == 0 || self.alerted == Some(tid) {
            return None;
        }
        let sink = node.sink.as_ref().expect("receiver node without sink");
        let coding = self.params.coding();
        let mut event = None;
        if sink.distinct() >= coding.data_parcels() {
            if let (Ok(msg), Some(seq)) = (sink.decode(&coding), sink.message_seq()) {
                let delivered = seq == self.delivered.len() as u64;
                if delivered {
                    self.delivered.push(msg);
                }
                event = Some(ReceiverEvent::Decoded { transmission: tid, message_seq: seq, delivered });
            }
        }
        if event.is_none() {
            let me = node.id;
            let pots: Vec<u64> = node
                .params()
                .nodes()
                .filter_map(|u| if u == me { Some(node.phi) } else { node.potential_parcel(u).map(|p| p.phi) })
                .collect();
            if inconsistent(pots, self.params.kcd()) {
                event = Some(ReceiverEvent::Inconsistent { transmission: tid });
            }
        }
        let kind = match event.as_ref()? {
            ReceiverEvent::Decoded { message_seq, .. } => AlertKind::ReceiverDecoded { message_seq: *message_seq },
            ReceiverEvent::Inconsistent { .. } => AlertKind::ReceiverInconsistent,
        };
        let alert = AlertParcel {
            origin: AlertOrigin::Receiver,
            transmission: tid,
            index: 0,
            total: 1,
            version: 0,
            kind,
            signature: crate::crypto::Signature::empty(),
        }
        .signed(&self.key, &mut self.scratch);
        node.receiver_alert = Some(alert);
        self.alerted = Some(tid);
        event
    }
}
