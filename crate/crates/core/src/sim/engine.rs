//! The deterministic event loop.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{Elimination, InvariantStats, RunMetrics};
use super::scenario::{Scenario, ScenarioError, StopRule};
use super::trace::{TraceEvent, TraceLog, TraceMode};
use crate::adversary::{Activation, DeliveryPolicy, Schedule, ScheduleError, Strategy, Trigger};
use crate::crypto::{keygen_signatures, HeBackend, HeContext, Keyring};
use crate::endpoints::{ReceiverCore, ReceiverEvent, SenderCore, TransmissionReport};
use crate::model::*;
use crate::node::{conservation_residual, ActivationOutput, Branch, NodeEnv, NodeState, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invariant violated at round {round}: {what}")]
    InvariantViolation { round: u64, what: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckEvery {
    Round,
    #[default]
    Transmission,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub check_every: CheckEvery,
    pub trace: TraceMode,
    /// Record violations instead of aborting on the first one.
    pub keep_going: bool,
    pub he_backend: Option<HeBackend>,
    /// Directory against which relative schedule files resolve.
    pub base_dir: Option<PathBuf>,
}

pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: TraceLog,
    pub schedule: Vec<Activation>,
    pub corrupt: Vec<NodeId>,
    pub delivered: Vec<Vec<u8>>,
    pub messages: Vec<Vec<u8>>,
}

pub struct Engine {
    scenario: Scenario,
    params: Arc<Params>,
    opts: RunOptions,
    he: HeContext,
    pub nodes: Vec<NodeState>,
    hooks: Vec<Option<Box<dyn Strategy + Send>>>,
    dormant: Vec<(usize, Box<dyn Strategy + Send>, Trigger)>,
    corrupt: Vec<bool>,
    pub sender: SenderCore,
    pub receiver: ReceiverCore,
    schedule: Schedule,
    queues: Vec<VecDeque<Packet>>,
    messages: Vec<Vec<u8>>,
    round: u64,
    trace: TraceLog,
    sched_log: Vec<Activation>,
    chi_seen: TransmissionId,
    insert_counts: Vec<u64>,
    closed_counts: Option<(TransmissionId, Vec<u64>)>,
    failures_since_elimination: u64,
    metrics: RunMetrics,
    eliminated_any: bool,
}

impl Engine {
    pub fn new(scenario: &Scenario, opts: RunOptions) -> Result<Engine, SimError> {
        let mut scenario = scenario.clone();
        if let Some(b) = opts.he_backend {
            scenario.crypto.he_backend = b;
        }
        let params = Arc::new(scenario.validate()?);
        let n = params.n;
        let cseed = scenario.crypto_seed();
        let he = HeContext::generate(scenario.crypto.he_backend, params.modulus, params.k, cseed)
            .map_err(|e| ScenarioError::Invalid { constraint: "HE context", detail: e.to_string() })?;
        let pairs = keygen_signatures(scenario.crypto.sig_backend, cseed, n);
        let keyring = Arc::new(Keyring::new(&pairs));
        let env = NodeEnv { params: params.clone(), keyring, he: he.public() };
        let nodes: Vec<NodeState> = params
            .nodes()
            .map(|u| {
                let seed = scenario.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (u.0 as u64 + 1);
                NodeState::new(u, &scenario.neighbors(u), env.clone(), pairs[u.index()].signing_key.clone(), seed)
            })
            .collect();
        let mut hooks: Vec<Option<Box<dyn Strategy + Send>>> = (0..n).map(|_| None).collect();
        let mut dormant = Vec::new();
        let mut corrupt = vec![false; n];
        for (i, c) in scenario.corruption.0.iter().enumerate() {
            let h = c.strategy.build(scenario.seed ^ (0xC0_22u64 << 16) ^ i as u64);
            corrupt[c.node.index()] = true;
            match c.trigger {
                Trigger::Start => hooks[c.node.index()] = Some(h),
                ref t => dormant.push((c.node.index(), h, t.clone())),
            }
        }
        let messages = scenario.message_bodies(&params);
        let mut sender = SenderCore::new(params.clone(), he.clone(), pairs[0].signing_key.clone(), messages.clone(), scenario.seed ^ 0x5E4D);
        let receiver = ReceiverCore::new(pairs[n - 1].signing_key.clone(), params.clone());
        let schedule = Schedule::new(&scenario.schedule, &scenario.edges(), scenario.seed ^ 0x5C4E_D01E, scenario.rounds, opts.base_dir.as_deref())?;
        let metrics = RunMetrics {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            params: (*params).clone(),
            rounds: 0,
            delivered_messages: 0,
            messages: messages.len() as u64,
            delivery_curve: Vec::new(),
            reports: Vec::new(),
            detections: Vec::new(),
            eliminations: Vec::new(),
            memory_max: vec![MemoryLedger::default(); n],
            invariants: InvariantStats::default(),
            violations: Vec::new(),
            notes: Vec::new(),
            oversize_dropped: 0,
            delivered_in_order: true,
            trace_digest: None,
        };
        let mut nodes = nodes;
        if messages.is_empty() {
            sender.finished = true;
        } else {
            sender.begin_transmission(&mut nodes[0], 0);
        }
        let k = params.k;
        let trace = TraceLog::new(opts.trace);
        let mut e = Engine {
            scenario,
            he,
            nodes,
            hooks,
            dormant,
            corrupt,
            sender,
            receiver,
            schedule,
            queues: (0..n * n).map(|_| VecDeque::new()).collect(),
            messages,
            round: 0,
            trace,
            sched_log: Vec::new(),
            chi_seen: 0,
            insert_counts: vec![0; k],
            closed_counts: None,
            failures_since_elimination: 0,
            metrics,
            eliminated_any: false,
            opts,
            params,
        };
        e.share_chi();
        Ok(e)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_corrupt(&self, u: NodeId) -> bool {
        self.corrupt[u.index()]
    }

    fn share_chi(&mut self) {
        let tid = self.sender.transmission;
        if tid == self.chi_seen {
            return;
        }
        let counts = std::mem::replace(&mut self.insert_counts, vec![0; self.params.k]);
        self.closed_counts = Some((self.chi_seen, counts));
        self.chi_seen = tid;
        if !self.scenario.cheat_injection {
            return;
        }
        let chi = self.sender.chi().clone();
        for h in self.hooks.iter_mut().flatten() {
            if h.wants_chi() {
                h.observe_chi(tid, &chi);
            }
        }
    }

    fn violation(&mut self, what: String) -> Result<(), SimError> {
        if self.opts.keep_going {
            if self.metrics.violations.len() < 1000 {
                self.metrics.violations.push(format!("round {}: {what}", self.round));
            }
            Ok(())
        } else {
            Err(SimError::InvariantViolation { round: self.round, what })
        }
    }

    fn pop(&mut self, from: NodeId, to: NodeId) -> Option<Packet> {
        let q = &mut self.queues[from.index() * self.params.n + to.index()];
        match self.scenario.delivery {
            DeliveryPolicy::Fifo => q.pop_front(),
            DeliveryPolicy::Lifo => q.pop_back(),
        }
    }

    fn activate(&mut self, u: NodeId, peer: NodeId, pkt: Option<Packet>) -> ActivationOutput {
        let hook = self.hooks[u.index()].as_deref_mut().map(|h| h as &mut dyn Strategy);
        self.nodes[u.index()].on_activation(peer, pkt, self.round, hook)
    }

    fn wake_triggers(&mut self, closed: Option<Outcome>) {
        let round = self.round;
        let mut i = 0;
        while i < self.dormant.len() {
            let fire = match &self.dormant[i].2 {
                Trigger::Start => true,
                Trigger::AtRound { round: r } => round >= *r,
                Trigger::AfterOutcome { outcome } => closed == Some(*outcome),
            };
            if fire {
                let (u, h, _) = self.dormant.remove(i);
                self.hooks[u] = Some(h);
            } else {
                i += 1;
            }
        }
    }

    /// Runs one round. Returns `false` when the run is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.done() {
            return Ok(false);
        }
        let (a, b) = match self.schedule.next_activation() {
            Ok(e) => e,
            Err(ScheduleError::ScheduleExhausted(_)) => return Ok(false),
            Err(e) => return Err(e.into()),
        };
        if !self.dormant.is_empty() {
            self.wake_triggers(None);
        }
        let round = self.round;
        self.sched_log.push(Activation { round, u: a, v: b });
        let pa = self.pop(b, a);
        let pb = self.pop(a, b);
        let oa = self.activate(a, b, pa);
        let ob = self.activate(b, a, pb);
        let mut oversize = 0u8;
        for (from, to, out) in [(a, b, &oa), (b, a, &ob)] {
            if let Some(p) = &out.packet {
                if wire::fits(p, self.params.bandwidth_bits) {
                    self.queues[from.index() * self.params.n + to.index()].push_back(p.clone());
                } else {
                    oversize += 1;
                }
            }
        }
        self.metrics.oversize_dropped += oversize as u64;
        self.check_transfers(a, &oa)?;
        self.check_transfers(b, &ob)?;

        let r = self.params.receiver();
        if a == r || b == r {
            let ev = self.receiver.step(&mut self.nodes[r.index()]);
            if let Some(ReceiverEvent::Decoded { delivered: true, message_seq, .. }) = ev {
                let i = message_seq as usize;
                if self.receiver.delivered.get(i) != self.messages.get(i) {
                    self.metrics.delivered_in_order = false;
                    self.violation(format!("message {i} delivered out of order or altered"))?;
                }
                self.metrics.delivered_messages = self.receiver.delivered.len() as u64;
                self.metrics.delivery_curve.push((round, self.metrics.delivered_messages));
            }
        }
        let report = self.sender.step(&mut self.nodes[0], round);
        if let Some(rep) = &report {
            self.on_report(rep)?;
        }
        for u in [a, b, NodeId(0)] {
            if let Some(s) = self.nodes[u.index()].take_closed() {
                self.check_snapshot(u, &s)?;
            }
        }
        if self.opts.check_every == CheckEvery::Round {
            self.check_live(a)?;
            self.check_live(b)?;
            self.check_memory()?;
        }
        if self.trace.mode() != TraceMode::Off {
            self.trace.push(TraceEvent { round, edge: (a, b), sides: [oa.event, ob.event], oversize, closed: report });
        }
        self.round += 1;
        Ok(!self.done())
    }

    fn done(&self) -> bool {
        self.sender.finished
            || (self.scenario.stop == StopRule::FirstElimination && !self.metrics.eliminations.is_empty())
    }

    fn on_report(&mut self, rep: &TransmissionReport) -> Result<(), SimError> {
        self.metrics.reports.push(rep.clone());
        for d in &self.sender.detections[self.metrics.detections.len()..] {
            self.metrics.detections.push(d.clone());
        }
        match rep.outcome {
            Outcome::F2 | Outcome::F3 => {
                self.failures_since_elimination += 1;
                let inv = &mut self.metrics.invariants;
                inv.max_failures_between_eliminations = inv.max_failures_between_eliminations.max(self.failures_since_elimination);
            }
            Outcome::F4 => {
                self.failures_since_elimination = 0;
                self.eliminated_any = true;
                let node = rep.eliminated.expect("F4 names the eliminated node");
                self.metrics.eliminations.push(Elimination { round: self.round, node, truly_corrupt: self.corrupt[node.index()] });
                if !self.corrupt[node.index()] {
                    self.violation(format!("honest {node} eliminated"))?;
                }
            }
            Outcome::S1 => {}
        }
        self.metrics.invariants.max_failures_open = self.metrics.invariants.max_failures_open.max(self.sender.max_failures_open as u64);
        if rep.outcome == Outcome::F3 {
            let n = self.params.n as u64;
            let need = self.params.data_parcels() + (n - 2) * self.params.capacity;
            if self.params.d <= need {
                // F3 without deletion is impossible only when D exceeds this;
                // recorded, not fatal, since desk-scale D may be smaller.
                self.metrics.notes.push(format!("F3 with D = {} <= (1-λ)D + (n-2)C = {need}", self.params.d));
            }
        }
        if !self.dormant.is_empty() {
            self.wake_triggers(Some(rep.outcome));
        }
        self.share_chi();
        if self.opts.check_every == CheckEvery::Transmission {
            self.check_memory()?;
        }
        Ok(())
    }

    fn check_transfers(&mut self, u: NodeId, out: &ActivationOutput) -> Result<(), SimError> {
        let Some(t) = out.transfer else { return Ok(()) };
        if t.branch == Branch::Insert {
            if let Some((tid, idx)) = out.event.parcel {
                if tid == self.sender.transmission {
                    let s = self.sender.chi()[idx as usize] as usize;
                    self.insert_counts[s] += 1;
                }
            }
        }
        if self.corrupt[u.index()] {
            return Ok(());
        }
        self.metrics.invariants.transfer_checks += 1;
        let (num, den) = self.params.thresholds().tau();
        if (t.phi as i128) * den <= num {
            return self.violation(format!("{u} transfer with potential difference {} below the gap", t.phi));
        }
        Ok(())
    }

    fn check_snapshot(&mut self, u: NodeId, s: &Snapshot) -> Result<(), SimError> {
        if self.corrupt[u.index()] {
            return Ok(());
        }
        let role = self.params.role(u);
        if role == Role::Sender {
            let mut out = vec![0i128; self.params.k];
            for r in &s.records {
                for (o, v) in out.iter_mut().zip(self.he.decrypt(&r.dir(u).psi).expect("decrypt")) {
                    *o += v as i128;
                }
            }
            if let Some((tid, counts)) = &self.closed_counts {
                if *tid == s.transmission {
                    self.metrics.invariants.insertion_checks += 1;
                    let expect: Vec<i128> = counts.iter().map(|&c| c as i128).collect();
                    if out != expect {
                        let what = format!("inserted set counts {expect:?} but Sender records show {out:?}");
                        self.violation(what)?;
                    }
                }
            }
            return Ok(());
        }
        self.metrics.invariants.conservation_checks += 1;
        let residual = conservation_residual(u, &s.records, &s.psi_node, &self.he);
        if residual.iter().any(|&x| x != 0) {
            self.violation(format!("{u} conservation residual {residual:?} at end of transmission {}", s.transmission))?;
        }
        if !self.eliminated_any {
            self.metrics.invariants.wrap_checks += 1;
            let limit = self.params.modulus - 1;
            let mut vecs = vec![&s.psi_node];
            for r in &s.records {
                vecs.push(&r.up.psi);
                vecs.push(&r.down.psi);
            }
            for v in vecs {
                if self.he.decrypt(v).expect("decrypt").iter().any(|&x| x >= limit) {
                    self.violation(format!("{u} obfuscated count reached N-1"))?;
                }
            }
        }
        Ok(())
    }

    fn check_live(&mut self, u: NodeId) -> Result<(), SimError> {
        if self.corrupt[u.index()] || self.params.role(u) == Role::Sender {
            return Ok(());
        }
        self.metrics.invariants.conservation_checks += 1;
        let residual = self.nodes[u.index()].conservation_residual(&self.he);
        if residual.iter().any(|&x| x != 0) {
            self.violation(format!("{u} conservation residual {residual:?}"))?;
        }
        Ok(())
    }

    fn check_memory(&mut self) -> Result<(), SimError> {
        for i in 0..self.nodes.len() {
            let ledger = audit_memory(&self.nodes[i]);
            self.metrics.memory_max[i].max_with(&ledger);
            if self.corrupt[i] {
                continue;
            }
            self.metrics.invariants.memory_checks += 1;
            if let Err(v) = ledger.check(&self.params, self.nodes[i].role) {
                self.violation(format!("{} memory: {v}", NodeId(i as u16)))?;
            }
        }
        Ok(())
    }

    /// Closes the run. The live transmission is checked like a closed one:
    /// memory, and conservation at every honest node. Violations found here
    /// are always recorded.
    pub fn finish(mut self) -> RunOutput {
        self.opts.keep_going = true;
        let _ = self.check_memory();
        for u in self.params.nodes() {
            let _ = self.check_live(u);
        }
        self.metrics.rounds = self.round;
        self.metrics.detections = self.sender.detections.clone();
        self.metrics.invariants.max_failures_open = self.sender.max_failures_open as u64;
        self.metrics.trace_digest = self.trace.digest();
        let corrupt = self.params.nodes().filter(|u| self.corrupt[u.index()]).collect();
        RunOutput {
            metrics: self.metrics,
            trace: self.trace,
            schedule: self.sched_log,
            corrupt,
            delivered: self.receiver.delivered,
            messages: self.messages,
        }
    }
}

/// Validates the scenario and runs it to completion.
pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<RunOutput, SimError> {
    let strict = !opts.keep_going;
    let mut e = Engine::new(scenario, opts)?;
    while e.step()? {}
    let round = e.round();
    let out = e.finish();
    if strict {
        if let Some(what) = out.metrics.violations.first() {
            return Err(SimError::InvariantViolation { round, what: what.clone() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(rounds: u64) -> Scenario {
        serde_json::from_value(serde_json::json!({
            "n": 4, "capacity": 192, "bandwidth_bits": 8192, "k": 4, "d": 384,
            "messages": 1, "seed": 3, "rounds": rounds
        }))
        .unwrap()
    }

    #[test]
    fn stepping_by_hand_matches_run() {
        let sc = scenario(300);
        let mut e = Engine::new(&sc, RunOptions::default()).unwrap();
        let mut steps = 0;
        while e.step().unwrap() {
            steps += 1;
            assert_eq!(e.round(), steps);
        }
        assert_eq!(steps, 300);
        let by_hand = e.finish();
        let direct = run(&sc, RunOptions::default()).unwrap();
        assert_eq!(by_hand.metrics, direct.metrics);
        assert_eq!(by_hand.schedule.len(), 300);
    }

    #[test]
    fn round_budget_ends_an_undelivered_run_cleanly() {
        let out = run(&scenario(50), RunOptions::default()).unwrap();
        assert_eq!(out.metrics.rounds, 50);
        assert_eq!(out.metrics.delivered_messages, 0);
        assert!(out.metrics.violations.is_empty());
        // the open transmission is still audited at the end
        assert!(out.metrics.invariants.conservation_checks > 0);
    }

    #[test]
    fn per_round_checking_checks_more() {
        let sc = scenario(400);
        let coarse = run(&sc, RunOptions::default()).unwrap().metrics.invariants;
        let fine = run(&sc, RunOptions { check_every: CheckEvery::Round, ..RunOptions::default() }).unwrap().metrics.invariants;
        assert!(fine.conservation_checks > coarse.conservation_checks);
        assert!(fine.transfer_checks == coarse.transfer_checks);
    }

    #[test]
    fn corrupt_nodes_are_known_to_the_engine() {
        let mut sc = scenario(10);
        sc.corruption = serde_json::from_value(serde_json::json!([{ "node": 2, "strategy": { "kind": "dropping" } }])).unwrap();
        let e = Engine::new(&sc, RunOptions::default()).unwrap();
        assert!(e.is_corrupt(NodeId(2)));
        assert!(!e.is_corrupt(NodeId(1)));
        assert_eq!(e.params().n, 4);
    }

    #[test]
    fn invalid_scenarios_never_start() {
        let mut sc = scenario(10);
        sc.capacity = 10;
        assert!(matches!(Engine::new(&sc, RunOptions::default()), Err(SimError::Scenario(_))));
    }

    #[test]
    fn violation_message_names_the_round() {
        let e = SimError::InvariantViolation { round: 9, what: "N1 memory".into() };
        assert_eq!(e.to_string(), "invariant violated at round 9: N1 memory");
    }
}
