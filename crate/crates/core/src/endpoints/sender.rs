//! The Sender: transmission lifecycle, alerts, blacklist and testimony
//! collection, and elimination.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::detect::{assemble_testimony, decrypt_records, detect_f2, detect_f3, DetectError, F2Finding, F3Finding, PlainTestimony};
use crate::coding;
use crate::crypto::{HeContext, Signature, SigningKey};
use crate::model::*;
use crate::node::NodeState;

/// Result of running the detector on a complete testimony set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Detection {
    F2 { finding: Option<F2Finding>, imbalance: BTreeMap<NodeId, i128> },
    F3 { finding: Option<F3Finding> },
    /// An owner's testimony parcels contradicted each other.
    SelfContradiction { node: NodeId },
}

impl Detection {
    pub fn culprit(&self) -> Option<NodeId> {
        match self {
            Detection::F2 { finding, .. } => finding.as_ref().map(|f| f.node()),
            Detection::F3 { finding } => finding.as_ref().map(|f| f.node()),
            Detection::SelfContradiction { node } => Some(*node),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// The failed transmission whose testimonies were examined.
    pub transmission: TransmissionId,
    pub outcome: Outcome,
    pub round: u64,
    pub participants: Vec<NodeId>,
    pub detection: Detection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub transmission: TransmissionId,
    pub message_seq: u64,
    pub outcome: Outcome,
    pub start_round: u64,
    pub end_round: u64,
    pub rounds: u64,
    pub inserted: u64,
    pub eliminated: Option<NodeId>,
    pub delivered: bool,
    /// Nodes put on this transmission's blacklist (F2/F3).
    pub blacklisted: Vec<NodeId>,
}

#[derive(Clone, Debug)]
struct Pending {
    outcome: Outcome,
    participants: Vec<NodeId>,
    sender_records: Vec<EdgeRecord>,
    sender_psi: crate::crypto::HeVector,
    complete: BTreeMap<NodeId, Vec<Arc<TestimonyParcel>>>,
}

pub struct SenderCore {
    params: Arc<Params>,
    he: HeContext,
    key: SigningKey,
    rng: ChaCha8Rng,
    messages: Vec<Vec<u8>>,
    pub message_seq: u64,
    pub transmission: TransmissionId,
    chi: Arc<Vec<u16>>,
    prev_outcome: Option<Outcome>,
    failed_stamps: VecDeque<TransmissionId>,
    pub flags: Vec<NodeFlag>,
    flag_versions: Vec<u32>,
    stamp_count: usize,
    pending: BTreeMap<TransmissionId, Pending>,
    start_round: u64,
    last_insert_round: u64,
    buffer_len: usize,
    pub reports: Vec<TransmissionReport>,
    pub detections: Vec<DetectionRecord>,
    /// Failed transmissions since the last elimination or resolved testimony set.
    pub failures_open: usize,
    pub max_failures_open: usize,
    pub finished: bool,
    scratch: Vec<u8>,
}

impl SenderCore {
    /// `he` must carry the secret key.
    pub fn new(params: Arc<Params>, he: HeContext, key: SigningKey, messages: Vec<Vec<u8>>, seed: u64) -> SenderCore {
        let n = params.n;
        SenderCore {
            he,
            key,
            rng: ChaCha8Rng::seed_from_u64(seed),
            messages,
            message_seq: 0,
            transmission: 0,
            chi: Arc::new(Vec::new()),
            prev_outcome: None,
            failed_stamps: VecDeque::new(),
            flags: vec![NodeFlag::Clear; n],
            flag_versions: vec![0; n],
            stamp_count: 0,
            pending: BTreeMap::new(),
            start_round: 0,
            last_insert_round: 0,
            buffer_len: 0,
            reports: Vec::new(),
            detections: Vec::new(),
            failures_open: 0,
            max_failures_open: 0,
            finished: false,
            scratch: Vec::new(),
            params,
        }
    }

    /// χ of the current transmission: the set index (0-based) of each parcel.
    pub fn chi(&self) -> &Arc<Vec<u16>> {
        &self.chi
    }

    pub fn he(&self) -> &HeContext {
        &self.he
    }

    pub fn eliminated(&self) -> BTreeSet<NodeId> {
        self.params.nodes().filter(|u| self.flags[u.index()] == NodeFlag::Eliminated).collect()
    }

    fn flag_slot(&self, node: NodeId) -> u16 {
        (1 + self.stamp_count + node.index() - 1) as u16
    }

    fn alert_total(&self) -> u16 {
        (1 + self.stamp_count + self.params.n - 1) as u16
    }

    /// Builds the Sender alert for a new transmission: previous outcome,
    /// recent failure stamps, then one flag slot per non-Sender node.
    pub fn build_alert(&mut self) -> Vec<AlertParcel> {
        let tid = self.transmission;
        self.stamp_count = self.failed_stamps.len();
        let total = self.alert_total();
        let mut kinds = vec![AlertKind::PrevStatus(self.prev_outcome)];
        kinds.extend(self.failed_stamps.iter().map(|&t| AlertKind::FailedStamp(t)));
        for u in self.params.nodes().skip(1) {
            kinds.push(AlertKind::NodeFlag { node: u, flag: self.flags[u.index()] });
        }
        let mut out = Vec::with_capacity(kinds.len());
        for (i, kind) in kinds.into_iter().enumerate() {
            let version = match kind {
                AlertKind::NodeFlag { node, .. } => self.flag_versions[node.index()],
                _ => 0,
            };
            let a = AlertParcel {
                origin: AlertOrigin::Sender,
                transmission: tid,
                index: i as u16,
                total,
                version,
                kind,
                signature: Signature::empty(),
            };
            out.push(a.signed(&self.key, &mut self.scratch));
        }
        out
    }

    /// Starts the next transmission of the current message: fresh χ, fresh
    /// set tags, a new alert. Returns the alert.
    pub fn begin_transmission(&mut self, node: &mut NodeState, round: u64) -> Vec<AlertParcel> {
        self.transmission += 1;
        let tid = self.transmission;
        let params = self.params.clone();
        let d = params.d as usize;
        let k = params.k;
        self.chi = Arc::new((0..d).map(|_| self.rng.gen_range(0..k) as u16).collect());
        let msg = &self.messages[self.message_seq as usize];
        let payloads = coding::encode(msg, &params.coding()).expect("message sized for the code");
        node.switch_transmission(tid);
        for (i, payload) in payloads.into_iter().enumerate() {
            let tag = self.he.encrypt_unit(self.chi[i] as usize + 1, &mut self.rng).expect("set index");
            let mut p = CodewordParcel {
                transmission: tid,
                message_seq: self.message_seq,
                index: i as u32,
                payload,
                tag,
                signature: Signature::empty(),
            };
            p.signing_bytes(&mut self.scratch);
            p.signature = self.key.sign(&self.scratch);
            node.buffer.push(Arc::new(p));
        }
        let alert = self.build_alert();
        node.install_alert(&alert, None);
        self.start_round = round;
        self.last_insert_round = round;
        self.buffer_len = node.buffer.len();
        alert
    }

    fn close(&mut self, node: &mut NodeState, outcome: Outcome, round: u64, eliminated: Option<NodeId>) -> TransmissionReport {
        let mut blacklisted = Vec::new();
        let tid = self.transmission;
        if matches!(outcome, Outcome::F2 | Outcome::F3) {
            blacklisted = self
                .params
                .nodes()
                .skip(1)
                .filter(|u| self.flags[u.index()] == NodeFlag::Clear)
                .collect();
            for u in &blacklisted {
                self.flags[u.index()] = NodeFlag::Blacklisted(tid);
                self.flag_versions[u.index()] += 1;
            }
            self.failed_stamps.push_back(tid);
            while self.failed_stamps.len() > self.params.n - 1 {
                self.failed_stamps.pop_front();
            }
            self.pending.insert(
                tid,
                Pending {
                    outcome,
                    participants: blacklisted.clone(),
                    sender_records: node.edges.iter().map(|e| e.record.clone()).collect(),
                    sender_psi: self.he.zero(),
                    complete: BTreeMap::new(),
                },
            );
            self.failures_open += 1;
            self.max_failures_open = self.max_failures_open.max(self.failures_open);
        }
        let delivered = outcome == Outcome::S1;
        let report = TransmissionReport {
            transmission: tid,
            message_seq: self.message_seq,
            outcome,
            start_round: self.start_round,
            end_round: round,
            rounds: round - self.start_round,
            inserted: self.params.d - node.buffer.len() as u64,
            eliminated,
            delivered,
            blacklisted,
        };
        self.prev_outcome = Some(outcome);
        if delivered {
            self.message_seq += 1;
        }
        if self.message_seq as usize >= self.messages.len() {
            self.finished = true;
            node.switch_transmission(tid + 1);
            self.transmission = tid + 1;
        } else {
            self.begin_transmission(node, round);
        }
        self.reports.push(report.clone());
        report
    }

    fn eliminate(&mut self, x: NodeId) {
        for u in self.params.nodes().skip(1) {
            if matches!(self.flags[u.index()], NodeFlag::Blacklisted(_)) {
                self.flags[u.index()] = NodeFlag::Clear;
                self.flag_versions[u.index()] += 1;
            }
        }
        self.flags[x.index()] = NodeFlag::Eliminated;
        self.flag_versions[x.index()] += 1;
        self.pending.clear();
        self.failures_open = 0;
    }

    /// Installs a removal parcel for `u` in the live alert.
    fn remove_from_blacklist(&mut self, node: &mut NodeState, u: NodeId) {
        self.flags[u.index()] = NodeFlag::Clear;
        self.flag_versions[u.index()] += 1;
        let a = AlertParcel {
            origin: AlertOrigin::Sender,
            transmission: self.transmission,
            index: self.flag_slot(u),
            total: self.alert_total(),
            version: self.flag_versions[u.index()],
            kind: AlertKind::BlacklistRemoval { node: u },
            signature: Signature::empty(),
        }
        .signed(&self.key, &mut self.scratch);
        node.install_alert(&[a], None);
    }

    fn run_detection(&self, p: &Pending) -> Detection {
        let mut set: BTreeMap<NodeId, PlainTestimony> = BTreeMap::new();
        let s = self.params.sender();
        set.insert(s, decrypt_records(&self.he, s, &p.sender_records, &p.sender_psi).expect("sender decrypts its own"));
        for (&owner, parcels) in &p.complete {
            match assemble_testimony(&self.he, owner, parcels) {
                Ok(t) => {
                    set.insert(owner, t);
                }
                Err(x) => return Detection::SelfContradiction { node: x },
            }
        }
        match p.outcome {
            Outcome::F2 => {
                let imbalance = set
                    .values()
                    .filter(|t| self.params.role(t.owner) == Role::Internal)
                    .map(|t| (t.owner, super::detect::phi_imbalance(t)))
                    .collect();
                let finding = match detect_f2(&self.params, &set) {
                    Ok(f) => Some(f),
                    Err(DetectError::NoImbalanceFound) => None,
                    Err(e) => panic!("F2 detection: {e}"),
                };
                Detection::F2 { finding, imbalance }
            }
            _ => {
                let finding = match detect_f3(&self.params, &set) {
                    Ok(f) => Some(f),
                    Err(DetectError::NoViolatorFound) => None,
                    Err(e) => panic!("F3 detection: {e}"),
                };
                Detection::F3 { finding }
            }
        }
    }

    /// Runs after each activation of one of the Sender's edges, and once per
    /// round for the horizon check. Returns the report of a closed
    /// transmission, if any.
    pub fn step(&mut self, node: &mut NodeState, round: u64) -> Option<TransmissionReport> {
        if self.finished || self.transmission == 0 {
            return None;
        }
        if node.buffer.len() < self.buffer_len {
            self.last_insert_round = round;
        }
        self.buffer_len = node.buffer.len();

        // testimony harvesting
        let n = self.params.n;
        for u in self.params.nodes().skip(1) {
            let NodeFlag::Blacklisted(t) = self.flags[u.index()] else { continue };
            let parcels: Vec<Arc<TestimonyParcel>> = node.testimony_of(u).filter(|p| p.transmission == t).cloned().collect();
            if parcels.len() < n - 1 {
                continue;
            }
            if let Some(p) = self.pending.get_mut(&t) {
                p.complete.insert(u, parcels);
            }
            self.remove_from_blacklist(node, u);
        }

        // complete sets
        let ready: Vec<TransmissionId> = self
            .pending
            .iter()
            .filter(|(_, p)| p.participants.iter().all(|u| p.complete.contains_key(u)))
            .map(|(&t, _)| t)
            .collect();
        for t in ready {
            let Some(p) = self.pending.remove(&t) else { continue };
            let detection = self.run_detection(&p);
            let culprit = detection.culprit();
            self.detections.push(DetectionRecord {
                transmission: t,
                outcome: p.outcome,
                round,
                participants: p.participants.clone(),
                detection,
            });
            self.failures_open = 0;
            if let Some(x) = culprit {
                self.eliminate(x);
                return Some(self.close(node, Outcome::F4, round, Some(x)));
            }
        }

        // Receiver alert for the live transmission
        if let Some(a) = &node.receiver_alert {
            if a.transmission == self.transmission {
                match a.kind {
                    AlertKind::ReceiverDecoded { message_seq } if message_seq == self.message_seq => {
                        return Some(self.close(node, Outcome::S1, round, None));
                    }
                    AlertKind::ReceiverInconsistent => return Some(self.close(node, Outcome::F2, round, None)),
                    _ => {}
                }
            }
        }

        if node.buffer.is_empty() && round.saturating_sub(self.last_insert_round) >= self.params.horizon {
            return Some(self.close(node, Outcome::F3, round, None));
        }
        None
    }

    /// Open failure ledgers: (transmission, participants still owing testimony).
    pub fn open_ledgers(&self) -> Vec<(TransmissionId, Vec<NodeId>)> {
        self.pending
            .iter()
            .map(|(&t, p)| (t, p.participants.iter().filter(|u| !p.complete.contains_key(u)).copied().collect()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen_signatures, HeBackend, Keyring, SigBackend};
    use crate::node::NodeEnv;

    fn setup() -> (SenderCore, NodeState, Keyring) {
        let params = Arc::new(Params {
            n: 4,
            capacity: 192,
            bandwidth_bits: 8192,
            k: 3,
            lambda_inv: 2,
            d: 60,
            modulus: 12289,
            payload_bytes: 8,
            horizon: 50,
        });
        let he = HeContext::generate(HeBackend::Transparent, params.modulus, params.k, 1).unwrap();
        let pairs = keygen_signatures(SigBackend::KeyedHash, 1, params.n);
        let ring = Keyring::new(&pairs);
        let env = NodeEnv { params: params.clone(), keyring: Arc::new(Keyring::new(&pairs)), he: he.public() };
        let nb: Vec<NodeId> = params.nodes().skip(1).collect();
        let node = NodeState::new(NodeId(0), &nb, env, pairs[0].signing_key.clone(), 0);
        let msgs = vec![vec![7; params.message_bytes()]; 2];
        (SenderCore::new(params, he, pairs[0].signing_key.clone(), msgs, 9), node, ring)
    }

    #[test]
    fn nothing_happens_before_the_first_transmission() {
        let (mut s, mut node, _) = setup();
        assert_eq!(s.step(&mut node, 1000), None);
    }

    #[test]
    fn transmission_fills_the_buffer_with_tagged_parcels() {
        let (mut s, mut node, ring) = setup();
        let alert = s.begin_transmission(&mut node, 0);
        assert_eq!(s.transmission, 1);
        assert_eq!(node.buffer.len(), 60);
        assert_eq!(s.chi().len(), 60);
        assert!(s.chi().iter().all(|&c| c < 3));
        let mut scratch = Vec::new();
        for slot in node.buffer.iter() {
            let p = &slot.parcel;
            assert!(p.verify(&ring, NodeId(0), &mut scratch));
            let v = s.he().decrypt(&p.tag).unwrap();
            assert_eq!(v.iter().sum::<u64>(), 1);
            assert_eq!(v[s.chi()[p.index as usize] as usize], 1);
        }
        // previous outcome, then one flag slot per non-Sender node
        assert_eq!(alert.len(), 4);
        assert_eq!(alert[0].kind, AlertKind::PrevStatus(None));
        assert!(alert.iter().all(|a| a.total == 4 && a.verify(&ring, NodeId(0), &mut scratch)));
        assert_eq!(alert[3].kind, AlertKind::NodeFlag { node: NodeId(3), flag: NodeFlag::Clear });
    }

    #[test]
    fn quiet_horizon_closes_as_f3_and_blacklists() {
        let (mut s, mut node, _) = setup();
        s.begin_transmission(&mut node, 0);
        node.buffer.clear();
        assert_eq!(s.step(&mut node, 10), None);
        let r = s.step(&mut node, 60).expect("horizon passed");
        assert_eq!(r.outcome, Outcome::F3);
        assert_eq!((r.inserted, r.rounds), (60, 60));
        assert_eq!(r.blacklisted, vec![NodeId(1), NodeId(2), NodeId(3)]);
        assert!(!r.delivered);
        // same message again, with the failure advertised
        assert_eq!((s.transmission, s.message_seq), (2, 0));
        assert_eq!(node.buffer.len(), 60);
        assert_eq!(s.flags[1], NodeFlag::Blacklisted(1));
        assert_eq!(s.open_ledgers(), vec![(1, vec![NodeId(1), NodeId(2), NodeId(3)])]);
        assert_eq!(s.failures_open, 1);
        let alert = s.build_alert();
        assert_eq!(alert[0].kind, AlertKind::PrevStatus(Some(Outcome::F3)));
        assert_eq!(alert[1].kind, AlertKind::FailedStamp(1));
        assert_eq!(alert.len(), 5);
    }

    #[test]
    fn culprit_follows_the_finding() {
        let d = Detection::SelfContradiction { node: NodeId(2) };
        assert_eq!(d.culprit(), Some(NodeId(2)));
        assert_eq!(Detection::F3 { finding: None }.culprit(), None);
    }
}
