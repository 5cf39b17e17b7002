//! The per-node state machine: height-gradient transfer rules and the
//! Send-Next-Packet selection.
//!
//! Honest processing of an activation on edge (u, v):
//! 1. the packet u emitted at the previous activation is now with v, so its
//!    outstanding mark is cleared;
//! 2. the delivered packet from v is verified; any bad signature or a status
//!    record that disagrees with u's own rejects the whole packet;
//! 3. alert, potential and testimony parcels are stored;
//! 4. codeword logic runs on the two heights exchanged at the previous
//!    activation, which both endpoints see identically;
//! 5. the halt check runs and the next packet is emitted.
//!
//! A node that will not exchange codeword parcels on an edge (halted, alert
//! incomplete, itself or the peer blacklisted) advertises ⊥ there, so both
//! endpoints skip the codeword logic at the next activation together.

mod buffer;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use buffer::{Buffer, Slot};

use crate::adversary::{CodewordChoice, Strategy};
use crate::crypto::{HeContext, HeVector, Keyring, Signature, SigningKey};
use crate::endpoints::Sink;
use crate::model::wire;
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeError {
    #[error("transmission {requested} is older than the last participated transmission {last}")]
    StaleTransmission { requested: TransmissionId, last: TransmissionId },
    #[error("{0} is not adjacent")]
    NotAdjacent(NodeId),
}

/// What the node did with one activation, for the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Nothing was delivered.
    Idle,
    /// Signature or status check failed.
    Rejected,
    /// Control stored; codeword logic skipped (⊥, transmission mismatch).
    ControlOnly,
    /// Heights within the gap: neither send nor receive.
    NoTransfer,
    Send,
    Receive,
    Insert,
    Accept,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideEvent {
    pub node: NodeId,
    pub branch: Branch,
    /// Heights the two endpoints advertised at the previous activation.
    pub h_old: Option<u64>,
    pub h_v: Option<u64>,
    /// `(transmission, index)` of the transferred parcel.
    pub parcel: Option<(TransmissionId, u32)>,
    pub phi: u64,
    /// Control categories present in the delivered packet, as letters
    /// A(lert) S(tatus) P(otential) T(estimony).
    pub control: String,
}

/// One codeword transfer, reported to the engine for invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub branch: Branch,
    pub phi: u64,
}

pub struct ActivationOutput {
    pub packet: Option<Packet>,
    pub event: SideEvent,
    pub transfer: Option<Transfer>,
}

/// What the node put in its last packet on an edge.
#[derive(Clone, Debug)]
struct Emitted {
    transmission: TransmissionId,
    height: Height,
    parcel: Option<(Arc<CodewordParcel>, Option<u64>)>,
}

#[derive(Clone, Debug)]
pub struct EdgeState {
    pub peer: NodeId,
    /// A(u,v) within the current transmission.
    pub activations: u64,
    pub record: EdgeRecord,
    /// Peer's signature on the last record both sides agreed on.
    pub countersig: Option<Signature>,
    signed: Option<Signature>,
    emitted: Option<Emitted>,
    alert_cursor: usize,
    testimony_cursor: Vec<usize>,
}

/// Final edge records and Ψ_u of one transmission.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub transmission: TransmissionId,
    pub records: Vec<EdgeRecord>,
    pub psi_node: HeVector,
    pub participated: bool,
}

/// Shared, read-only protocol context handed to every node.
#[derive(Clone)]
pub struct NodeEnv {
    pub params: Arc<Params>,
    pub keyring: Arc<Keyring>,
    /// Public HE context (no secret key).
    pub he: HeContext,
}

pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    env: NodeEnv,
    thresholds: Thresholds,
    signer: SigningKey,
    pub transmission: TransmissionId,
    pub buffer: Buffer,
    pub edges: Vec<EdgeState>,
    edge_index: Vec<Option<usize>>,
    /// Φ_u for the current transmission.
    pub phi: u64,
    pub halted: bool,
    sender_alert: Vec<Option<AlertParcel>>,
    alert_total: Option<u16>,
    pub alert_complete: bool,
    pub receiver_alert: Option<AlertParcel>,
    /// Flags announced by the latest complete Sender alert.
    pub flags: Vec<NodeFlag>,
    potentials: Vec<Option<PotentialParcel>>,
    own_potential: Option<PotentialParcel>,
    testimonies: Vec<Vec<Option<Arc<TestimonyParcel>>>>,
    testimony_tid: Vec<TransmissionId>,
    /// Final state of the last transmission this node participated in.
    pub snapshot: Option<Snapshot>,
    /// Snapshot of the transmission just left, for the engine's checks.
    closed: Option<Snapshot>,
    pub participated: bool,
    /// Receiver only: parcels received toward decoding.
    pub sink: Option<Sink>,
    rng: ChaCha8Rng,
    scratch: Vec<u8>,
}

fn control_letters(p: &Packet) -> String {
    let mut s = String::new();
    if p.alert.is_some() {
        s.push('A');
    }
    if p.status.is_some() {
        s.push('S');
    }
    if p.potential.is_some() {
        s.push('P');
    }
    if p.testimony.is_some() {
        s.push('T');
    }
    s
}

impl NodeState {
    pub fn new(id: NodeId, neighbors: &[NodeId], env: NodeEnv, signer: SigningKey, seed: u64) -> NodeState {
        let n = env.params.n;
        let role = env.params.role(id);
        let mut peers: Vec<NodeId> = neighbors.to_vec();
        peers.sort();
        peers.dedup();
        let mut edge_index = vec![None; n];
        let edges: Vec<EdgeState> = peers
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                edge_index[p.index()] = Some(i);
                EdgeState {
                    peer: p,
                    activations: 0,
                    record: EdgeRecord::new(id, p, 0, &env.he),
                    countersig: None,
                    signed: None,
                    emitted: None,
                    alert_cursor: 0,
                    testimony_cursor: vec![0; n],
                }
            })
            .collect();
        let sink = (role == Role::Receiver).then(|| Sink::new(&env.he, 0));
        let thresholds = env.params.thresholds();
        NodeState {
            id,
            role,
            thresholds,
            signer,
            transmission: 0,
            buffer: Buffer::new(),
            edges,
            edge_index,
            phi: 0,
            halted: false,
            sender_alert: Vec::new(),
            alert_total: None,
            alert_complete: false,
            receiver_alert: None,
            flags: vec![NodeFlag::Clear; n],
            potentials: vec![None; n],
            own_potential: None,
            testimonies: vec![vec![None; n]; n],
            testimony_tid: vec![0; n],
            snapshot: None,
            closed: None,
            participated: false,
            sink,
            rng: ChaCha8Rng::seed_from_u64(seed),
            scratch: Vec::with_capacity(1024),
            env,
        }
    }

    pub fn params(&self) -> &Params {
        &self.env.params
    }

    pub fn he(&self) -> &HeContext {
        &self.env.he
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.iter().map(|e| e.peer)
    }

    pub fn edge(&self, peer: NodeId) -> Option<&EdgeState> {
        self.edge_index.get(peer.index()).copied().flatten().map(|i| &self.edges[i])
    }

    /// H_u: stored copies including those in outstanding requests.
    pub fn height(&self) -> u64 {
        match self.role {
            Role::Sender => self.env.params.capacity,
            Role::Receiver => 0,
            Role::Internal => self.buffer.len() as u64,
        }
    }

    pub fn potential_parcel(&self, node: NodeId) -> Option<&PotentialParcel> {
        if node == self.id {
            self.own_potential.as_ref()
        } else {
            self.potentials[node.index()].as_ref()
        }
    }

    pub fn testimony_of(&self, owner: NodeId) -> impl Iterator<Item = &Arc<TestimonyParcel>> {
        self.testimonies[owner.index()].iter().flatten()
    }

    pub fn sender_alert_parcels(&self) -> impl Iterator<Item = &AlertParcel> {
        self.sender_alert.iter().flatten()
    }

    /// Takes the snapshot recorded at the last transmission switch.
    pub fn take_closed(&mut self) -> Option<Snapshot> {
        self.closed.take()
    }

    fn is_barred(flag: NodeFlag) -> bool {
        !matches!(flag, NodeFlag::Clear)
    }

    /// Σ E(χ(p)) over parcels held now (the Receiver's received parcels).
    pub fn psi_held(&self) -> HeVector {
        if let Some(sink) = &self.sink {
            return sink.psi.clone();
        }
        let he = &self.env.he;
        let mut acc = he.zero();
        for s in self.buffer.iter() {
            he.add_assign(&mut acc, &s.parcel.tag).expect("tag from foreign context");
        }
        acc
    }

    /// Moves to transmission `tid`: snapshots the old state, discards stored
    /// codeword parcels and resets every per-transmission record.
    pub fn switch_transmission(&mut self, tid: TransmissionId) {
        if tid <= self.transmission {
            return;
        }
        let snap = Snapshot {
            transmission: self.transmission,
            records: self.edges.iter().map(|e| e.record.clone()).collect(),
            psi_node: self.psi_held(),
            participated: self.participated,
        };
        if self.participated {
            self.snapshot = Some(snap.clone());
        }
        self.closed = Some(snap);
        self.transmission = tid;
        self.buffer.clear();
        let n = self.env.params.n;
        for e in &mut self.edges {
            e.activations = 0;
            e.record = EdgeRecord::new(self.id, e.peer, tid, &self.env.he);
            e.countersig = None;
            e.signed = None;
            e.emitted = None;
            e.alert_cursor = 0;
            e.testimony_cursor = vec![0; n];
        }
        self.phi = 0;
        self.halted = false;
        self.sender_alert = vec![None; 2 * n];
        self.alert_total = None;
        self.alert_complete = false;
        self.receiver_alert = None;
        self.potentials = vec![None; n];
        self.own_potential = None;
        self.participated = false;
        if let Some(sink) = &mut self.sink {
            sink.reset(&self.env.he, tid);
        }
    }

    /// Installs Sender alert parcels (the Sender's own, or in tests).
    pub fn install_alert(&mut self, parcels: &[AlertParcel], hook: Option<&mut dyn Strategy>) {
        for a in parcels {
            self.store_sender_alert(a.clone());
        }
        self.refresh_alert(hook);
    }

    fn store_sender_alert(&mut self, a: AlertParcel) {
        if a.transmission > self.transmission {
            self.switch_transmission(a.transmission);
        }
        if a.transmission != self.transmission {
            return;
        }
        let idx = a.index as usize;
        if idx >= self.sender_alert.len() || a.total as usize > self.sender_alert.len() {
            return;
        }
        self.alert_total = Some(a.total);
        match &self.sender_alert[idx] {
            Some(old) if old.version >= a.version => {}
            _ => self.sender_alert[idx] = Some(a),
        }
    }

    /// Recomputes completeness and the flag view; builds or drops testimony.
    fn refresh_alert(&mut self, hook: Option<&mut dyn Strategy>) {
        let Some(total) = self.alert_total else { return };
        if !(0..total as usize).all(|i| self.sender_alert[i].is_some()) {
            return;
        }
        self.alert_complete = true;
        let mut flags = vec![NodeFlag::Clear; self.env.params.n];
        for a in self.sender_alert.iter().flatten() {
            match a.kind {
                AlertKind::NodeFlag { node, flag } if node.index() < flags.len() => flags[node.index()] = flag,
                AlertKind::BlacklistRemoval { node } if node.index() < flags.len() => flags[node.index()] = NodeFlag::Clear,
                _ => {}
            }
        }
        self.flags = flags;
        for owner in 0..self.env.params.n {
            if owner != self.id.index() && self.flags[owner] != NodeFlag::Clear {
                continue;
            }
            if owner != self.id.index() {
                self.testimonies[owner].iter_mut().for_each(|t| *t = None);
            }
        }
        if self.role == Role::Sender {
            self.participated = true;
            return;
        }
        match self.flags[self.id.index()] {
            NodeFlag::Clear => {
                self.participated = true;
                self.snapshot = None;
                self.testimonies[self.id.index()].iter_mut().for_each(|t| *t = None);
                self.testimony_tid[self.id.index()] = 0;
            }
            NodeFlag::Blacklisted(t) => {
                if self.testimony_tid[self.id.index()] != t || self.testimonies[self.id.index()].iter().all(|x| x.is_none()) {
                    if let Ok(parcels) = self.build_testimony(t, hook) {
                        let own = self.id.index();
                        self.testimonies[own] = vec![None; self.env.params.n];
                        for p in parcels {
                            let peer = p.entry.peer.index();
                            self.testimonies[own][peer] = Some(p);
                        }
                        self.testimony_tid[own] = t;
                    }
                }
            }
            NodeFlag::Eliminated => {}
        }
    }

    /// The node's testimony for transmission `t`: one parcel per other node.
    pub fn build_testimony(
        &mut self,
        t: TransmissionId,
        hook: Option<&mut dyn Strategy>,
    ) -> Result<Vec<Arc<TestimonyParcel>>, NodeError> {
        let zero_snapshot = |me: &NodeState| Snapshot {
            transmission: t,
            records: me.edges.iter().map(|e| EdgeRecord::new(me.id, e.peer, t, &me.env.he)).collect(),
            psi_node: me.env.he.zero(),
            participated: false,
        };
        let snap = match &self.snapshot {
            Some(s) if s.transmission == t => s.clone(),
            Some(s) if s.transmission > t => {
                return Err(NodeError::StaleTransmission { requested: t, last: s.transmission })
            }
            _ => zero_snapshot(self),
        };
        let psi_node = match hook {
            Some(h) => h.testimony_psi(self, &snap),
            None => snap.psi_node.clone(),
        };
        let mut out = Vec::with_capacity(self.env.params.n - 1);
        for peer in self.env.params.nodes().filter(|p| *p != self.id) {
            let record = snap
                .records
                .iter()
                .find(|r| r.other(self.id) == peer && (r.lo == self.id || r.hi == self.id))
                .cloned()
                .unwrap_or_else(|| EdgeRecord::new(self.id, peer, t, &self.env.he));
            let mut parcel = TestimonyParcel {
                owner: self.id,
                transmission: t,
                entry: TestimonyEntry { peer, record, psi_node: psi_node.clone() },
                signature: Signature::empty(),
            };
            parcel.signing_bytes(&mut self.scratch);
            parcel.signature = self.signer.sign(&self.scratch);
            out.push(Arc::new(parcel));
        }
        Ok(out)
    }

    fn own_potential(&mut self, round: u64) -> PotentialParcel {
        if let Some(p) = &self.own_potential {
            if p.phi == self.phi && p.transmission == self.transmission {
                return p.clone();
            }
        }
        let mut p = PotentialParcel {
            node: self.id,
            transmission: self.transmission,
            phi: self.phi,
            stamp: round,
            signature: Signature::empty(),
        };
        p.signing_bytes(&mut self.scratch);
        p.signature = self.signer.sign(&self.scratch);
        self.own_potential = Some(p.clone());
        p
    }

    /// Sets the halt flag once Φ_u > kCD.
    pub fn halt_check(&mut self) {
        if self.phi > self.env.params.kcd() {
            self.halted = true;
        }
    }

    fn verify_parcels(&mut self, pkt: &Packet) -> bool {
        let ring = self.env.keyring.clone();
        let params = self.env.params.clone();
        if let Some(c) = &pkt.codeword {
            if !c.verify(&ring, params.sender(), &mut self.scratch) {
                return false;
            }
        }
        if let Some(a) = &pkt.alert {
            let cached = match a.origin {
                AlertOrigin::Sender => {
                    a.transmission == self.transmission
                        && self.sender_alert.get(a.index as usize).and_then(|x| x.as_ref()) == Some(a)
                }
                AlertOrigin::Receiver => self.receiver_alert.as_ref() == Some(a),
            };
            let signer = match a.origin {
                AlertOrigin::Sender => params.sender(),
                AlertOrigin::Receiver => params.receiver(),
            };
            if !cached && !a.verify(&ring, signer, &mut self.scratch) {
                return false;
            }
        }
        if let Some(p) = &pkt.potential {
            if p.node.index() >= params.n {
                return false;
            }
            let cached = self.potentials[p.node.index()].as_ref() == Some(p);
            if !cached && !p.verify(&ring, &mut self.scratch) {
                return false;
            }
        }
        if let Some(t) = &pkt.testimony {
            if t.owner.index() >= params.n || t.entry.peer.index() >= params.n {
                return false;
            }
            let cached = self.testimonies[t.owner.index()][t.entry.peer.index()].as_deref() == Some(&**t);
            if !cached && !t.verify(&ring, &mut self.scratch) {
                return false;
            }
        }
        true
    }

    fn store_control(&mut self, pkt: &Packet, hook: Option<&mut dyn Strategy>) {
        let mut alert_changed = false;
        if let Some(a) = &pkt.alert {
            match a.origin {
                AlertOrigin::Sender => {
                    self.store_sender_alert(a.clone());
                    alert_changed = true;
                }
                AlertOrigin::Receiver => {
                    if a.transmission == self.transmission && self.receiver_alert.is_none() {
                        self.receiver_alert = Some(a.clone());
                    }
                }
            }
        }
        if let Some(p) = &pkt.potential {
            if p.node != self.id && p.transmission == self.transmission {
                let slot = &mut self.potentials[p.node.index()];
                if slot.as_ref().is_none_or(|old| old.stamp < p.stamp) {
                    *slot = Some(p.clone());
                }
            }
        }
        if let Some(t) = &pkt.testimony {
            let owner = t.owner.index();
            let relevant = t.owner != self.id && !(self.alert_complete && self.flags[owner] == NodeFlag::Clear);
            if relevant && t.transmission >= self.testimony_tid[owner] {
                if t.transmission > self.testimony_tid[owner] {
                    self.testimonies[owner].iter_mut().for_each(|x| *x = None);
                    self.testimony_tid[owner] = t.transmission;
                }
                self.testimonies[owner][t.entry.peer.index()] = Some(t.clone());
            }
        }
        if alert_changed {
            self.refresh_alert(hook);
        }
    }

    /// Runs one activation of edge (self, peer).
    pub fn on_activation(
        &mut self,
        peer: NodeId,
        delivered: Option<Packet>,
        round: u64,
        mut hook: Option<&mut dyn Strategy>,
    ) -> ActivationOutput {
        let Some(ei) = self.edge_index.get(peer.index()).copied().flatten() else {
            panic!("{} activated on non-adjacent edge to {}", self.id, peer);
        };
        let prev = self.edges[ei].emitted.take();
        if let Some(Emitted { parcel: Some((_, Some(slot))), .. }) = &prev {
            self.buffer.set_outstanding(*slot, None);
        }
        self.edges[ei].activations += 1;
        let mut event = SideEvent {
            node: self.id,
            branch: Branch::Idle,
            h_old: None,
            h_v: None,
            parcel: None,
            phi: 0,
            control: String::new(),
        };
        let mut transfer = None;
        if let Some(pkt) = delivered {
            event.control = control_letters(&pkt);
            transfer = self.process(ei, pkt, prev, round, &mut hook, &mut event);
        }
        if hook.as_ref().is_none_or(|h| !h.ignores_halt()) {
            self.halt_check();
        }
        let packet = self.send_next_packet(ei, round, hook);
        ActivationOutput { packet: Some(packet), event, transfer }
    }

    fn process(
        &mut self,
        ei: usize,
        pkt: Packet,
        prev: Option<Emitted>,
        round: u64,
        hook: &mut Option<&mut dyn Strategy>,
        event: &mut SideEvent,
    ) -> Option<Transfer> {
        let peer = self.edges[ei].peer;
        event.branch = Branch::Rejected;
        if pkt.from != peer || pkt.to != self.id {
            return None;
        }
        let ring = self.env.keyring.clone();
        if !pkt.verify(&ring, &mut self.scratch) || !self.verify_parcels(&pkt) {
            return None;
        }
        let Some(status) = &pkt.status else { return None };
        if status.from != peer
            || status.record.lo != self.edges[ei].record.lo
            || status.record.hi != self.edges[ei].record.hi
            || !status.verify(&ring, &mut self.scratch)
        {
            return None;
        }
        let tid_before = self.transmission;
        let status_ok = status.record.transmission == self.transmission;
        if status_ok && status.record != self.edges[ei].record {
            return None;
        }
        if status_ok {
            self.edges[ei].countersig = Some(status.signature);
        }
        self.store_control(&pkt, reborrow(hook));
        event.branch = Branch::ControlOnly;
        if !status_ok || self.transmission != tid_before || pkt.transmission != self.transmission {
            return None;
        }
        let prev = prev?;
        if prev.transmission != self.transmission {
            return None;
        }
        let (Height::Value(h_old), Height::Value(h_v)) = (prev.height, pkt.height) else {
            return None;
        };
        event.h_old = Some(h_old);
        event.h_v = Some(h_v);
        event.branch = Branch::NoTransfer;
        let th = self.thresholds;
        let incoming = pkt.codeword.filter(|c| c.transmission == self.transmission);
        let (branch, phi) = match self.role {
            Role::Sender => {
                let (parcel, slot) = prev.parcel?;
                if !th.sender_inserts(h_v) {
                    return None;
                }
                self.apply_send(ei, parcel, slot, h_old, h_v, round, hook, event);
                (Branch::Insert, h_old - h_v)
            }
            Role::Receiver => {
                let p = incoming?;
                if !th.receiver_accepts(h_v) {
                    return None;
                }
                event.parcel = Some((p.transmission, p.index));
                let rec = self.edges[ei].record.dir_mut(peer);
                rec.count += 1;
                rec.sender_heights += h_v;
                rec.receiver_heights += h_old;
                self.env.he.add_assign(&mut rec.psi, &p.tag).expect("tag context");
                self.touch(ei, round, h_v - h_old);
                if let Some(sink) = &mut self.sink {
                    sink.accept(&self.env.he, p);
                }
                (Branch::Accept, h_v - h_old)
            }
            Role::Internal => {
                if th.internal_sends(h_old, h_v) {
                    let (parcel, slot) = prev.parcel?;
                    self.apply_send(ei, parcel, slot, h_old, h_v, round, hook, event);
                    (Branch::Send, h_old - h_v)
                } else if th.internal_receives(h_old, h_v) {
                    let p = incoming?;
                    event.parcel = Some((p.transmission, p.index));
                    let rec = self.edges[ei].record.dir_mut(peer);
                    rec.count += 1;
                    rec.sender_heights += h_v;
                    rec.receiver_heights += h_old;
                    self.env.he.add_assign(&mut rec.psi, &p.tag).expect("tag context");
                    self.touch(ei, round, h_v - h_old);
                    let slot = self.buffer.push(p.clone());
                    if let Some(h) = reborrow(hook) {
                        if !h.keep_received(self, peer, &p) {
                            self.buffer.remove(slot);
                        }
                    }
                    (Branch::Receive, h_v - h_old)
                } else {
                    return None;
                }
            }
        };
        event.branch = branch;
        event.phi = phi;
        Some(Transfer { branch, phi })
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_send(
        &mut self,
        ei: usize,
        parcel: Arc<CodewordParcel>,
        slot: Option<u64>,
        h_old: u64,
        h_v: u64,
        round: u64,
        hook: &mut Option<&mut dyn Strategy>,
        event: &mut SideEvent,
    ) {
        let peer = self.edges[ei].peer;
        event.parcel = Some((parcel.transmission, parcel.index));
        let me = self.id;
        let rec = self.edges[ei].record.dir_mut(me);
        rec.count += 1;
        rec.sender_heights += h_old;
        rec.receiver_heights += h_v;
        self.env.he.add_assign(&mut rec.psi, &parcel.tag).expect("tag context");
        self.touch(ei, round, h_old - h_v);
        let keep = match reborrow(hook) {
            Some(h) => h.keep_sent(self, peer, &parcel),
            None => false,
        };
        if let Some(slot) = slot {
            if !keep {
                self.buffer.remove(slot);
            }
        }
    }

    fn touch(&mut self, ei: usize, round: u64, phi: u64) {
        let e = &mut self.edges[ei];
        e.record.stamp = round;
        e.signed = None;
        self.phi = self.phi.checked_add(phi).expect("potential overflow");
    }

    /// Whether this node will exchange codeword parcels with `peer`.
    pub fn exchange_allowed(&self, peer: NodeId, hook: Option<&dyn Strategy>) -> bool {
        let halted = self.halted && hook.is_none_or(|h| !h.ignores_halt());
        let self_ok = self.role == Role::Sender || !Self::is_barred(self.flags[self.id.index()]);
        !halted && self.alert_complete && self_ok && !Self::is_barred(self.flags[peer.index()])
    }

    fn send_next_packet(&mut self, ei: usize, round: u64, mut hook: Option<&mut dyn Strategy>) -> Packet {
        let peer = self.edges[ei].peer;
        let allowed = self.exchange_allowed(peer, hook.as_deref());
        let honest = if allowed { Height::Value(self.height()) } else { Height::Halt };
        let height = match hook.as_deref_mut() {
            Some(h) => h.advertise(self, peer, honest),
            None => honest,
        };
        let mut parcel: Option<(Arc<CodewordParcel>, Option<u64>)> = None;
        if height != Height::Halt && self.role != Role::Receiver {
            let choice = match hook {
                Some(h) => h.choose(self, peer),
                None => CodewordChoice::Honest,
            };
            parcel = match choice {
                CodewordChoice::Honest => self.buffer.pick(&mut self.rng).map(|id| {
                    self.buffer.set_outstanding(id, Some(peer));
                    (self.buffer.get(id).unwrap().parcel.clone(), Some(id))
                }),
                CodewordChoice::Copy(p) => Some((p, None)),
                CodewordChoice::Nothing => None,
            };
        }
        let alert = self.receiver_alert.clone().or_else(|| self.next_sender_alert(ei));
        if self.edges[ei].signed.is_none() {
            StatusParcel::record_bytes(&self.edges[ei].record, &mut self.scratch);
            self.edges[ei].signed = Some(self.signer.sign(&self.scratch));
        }
        let e = &self.edges[ei];
        let status = StatusParcel {
            from: self.id,
            record: e.record.clone(),
            signature: e.signed.unwrap(),
            countersig: e.countersig,
        };
        let n = self.env.params.n;
        let i = (e.activations % n as u64) as usize;
        let potential = if i == self.id.index() {
            Some(self.own_potential(round))
        } else {
            self.potentials[i].clone()
        };
        let testimony = self.next_testimony(ei, i);
        let mut pkt = Packet {
            from: self.id,
            to: peer,
            transmission: self.transmission,
            height,
            codeword: parcel.as_ref().map(|p| p.0.clone()),
            alert,
            status: Some(status),
            potential,
            testimony,
            signature: Signature::empty(),
        };
        pkt.sign(&self.signer, &mut self.scratch);
        self.edges[ei].emitted = Some(Emitted { transmission: self.transmission, height, parcel });
        pkt
    }

    fn next_sender_alert(&mut self, ei: usize) -> Option<AlertParcel> {
        let len = self.sender_alert.len();
        if len == 0 {
            return None;
        }
        let start = self.edges[ei].alert_cursor;
        for k in 0..len {
            let idx = (start + k) % len;
            if let Some(a) = &self.sender_alert[idx] {
                self.edges[ei].alert_cursor = (idx + 1) % len;
                return Some(a.clone());
            }
        }
        None
    }

    fn next_testimony(&mut self, ei: usize, owner: usize) -> Option<Arc<TestimonyParcel>> {
        let slots = &self.testimonies[owner];
        let len = slots.len();
        let start = self.edges[ei].testimony_cursor[owner];
        for k in 0..len {
            let idx = (start + k) % len;
            if let Some(t) = &slots[idx] {
                self.edges[ei].testimony_cursor[owner] = (idx + 1) % len;
                return Some(t.clone());
            }
        }
        None
    }

    /// Exact ledger of stored parcels. A snapshot kept for a future
    /// testimony counts as the n−1 testimony parcels it will become.
    pub fn memory(&self) -> MemoryLedger {
        let mut m = MemoryLedger::default();
        if self.role == Role::Internal {
            m.codeword_parcels_stored = self.buffer.len() as u64;
            m.codeword_bits = self.buffer.iter().map(|s| wire::codeword_len(&s.parcel) as u64 * 8).sum();
        }
        let mut control = 0u64;
        for a in self.sender_alert.iter().flatten().chain(self.receiver_alert.iter()) {
            m.alert_parcels += 1;
            control += wire::alert_len(a) as u64;
        }
        for e in &self.edges {
            m.status_parcels += 1;
            let sig = e.signed.unwrap_or_else(Signature::empty);
            control += wire::status_len(&e.record, &sig, e.countersig.as_ref()) as u64;
        }
        for p in self.potentials.iter().flatten().chain(self.own_potential.iter()) {
            m.potential_parcels += 1;
            control += wire::potential_len(p) as u64;
        }
        for t in self.testimonies.iter().flatten().flatten() {
            m.testimony_parcels += 1;
            control += wire::testimony_len(t) as u64;
        }
        let own_built = self.testimonies[self.id.index()].iter().any(|t| t.is_some());
        if let (Some(s), false) = (&self.snapshot, own_built) {
            let n = self.env.params.n as u64;
            m.testimony_parcels += n - 1;
            let sample = s.records.first().map_or(0, |r| {
                let mut b = Vec::new();
                wire::put_edge_record(&mut b, r);
                b.len() as u64
            });
            control += (n - 1) * (12 + sample + 2 * 64);
        }
        m.control_bits = control * 8;
        m
    }

    /// Control-slot selection without side effects on the codeword state,
    /// exposed for tests: (alert, potential, testimony) for activation `a`.
    pub fn peek_control(&self, peer: NodeId, a: u64) -> (Option<AlertParcel>, Option<NodeId>, bool) {
        let n = self.env.params.n;
        let i = (a % n as u64) as usize;
        let alert = self.receiver_alert.clone().or_else(|| self.sender_alert.iter().flatten().next().cloned());
        let pot = if i == self.id.index() || self.potentials[i].is_some() { Some(NodeId(i as u16)) } else { None };
        let _ = peer;
        (alert, pot, self.testimonies[i].iter().any(|t| t.is_some()))
    }

    /// Sum over all adjacent edges of (Ψ_{u,v} − Ψ_{v,u}) plus Ψ_u, decrypted
    /// by the caller's secret context. Zero for an honest node.
    pub fn conservation_residual(&self, secret: &HeContext) -> Vec<i128> {
        conservation_residual(self.id, &self.edges.iter().map(|e| e.record.clone()).collect::<Vec<_>>(), &self.psi_held(), secret)
    }
}

/// Ψ_u + Σ_v (Ψ_{u,v} − Ψ_{v,u}) over signed representatives of Z_N.
pub fn conservation_residual(id: NodeId, records: &[EdgeRecord], psi_node: &HeVector, secret: &HeContext) -> Vec<i128> {
    let n_mod = secret.modulus() as i128;
    let signed = |v: u64| -> i128 {
        let v = v as i128;
        if v > n_mod / 2 {
            v - n_mod
        } else {
            v
        }
    };
    let mut acc: Vec<i128> = secret.decrypt(psi_node).expect("decrypt").into_iter().map(signed).collect();
    for r in records {
        let peer = r.other(id);
        let out = secret.decrypt(&r.dir(id).psi).expect("decrypt");
        let inn = secret.decrypt(&r.dir(peer).psi).expect("decrypt");
        for (i, a) in acc.iter_mut().enumerate() {
            *a += signed(out[i]) - signed(inn[i]);
        }
    }
    acc
}

/// Shortens the trait-object lifetime so the hook can be lent out repeatedly.
fn reborrow<'a>(hook: &'a mut Option<&mut dyn Strategy>) -> Option<&'a mut dyn Strategy> {
    match hook {
        Some(h) => Some(&mut **h),
        None => None,
    }
}
