//! Scenario files: parameters, topology, schedule and corruption plan.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{CorruptionPlan, DeliveryPolicy, ScheduleSpec};
use crate::crypto::{default_modulus, signature_len, HeBackend, HeContext, SigBackend, Signature};
use crate::model::*;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario invalid: {constraint}: {detail}")]
    Invalid { constraint: &'static str, detail: String },
    #[error("scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(constraint: &'static str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { constraint, detail: detail.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Topology {
    Complete,
    /// A path through `order`, which must list every node once.
    Line { order: Vec<NodeId> },
    Edges { edges: Vec<(NodeId, NodeId)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoConfig {
    #[serde(default)]
    pub he_backend: HeBackend,
    #[serde(default)]
    pub sig_backend: SigBackend,
    /// Key material seed; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for CryptoConfig {
    fn default() -> Self {
        CryptoConfig { he_backend: HeBackend::Transparent, sig_backend: SigBackend::KeyedHash, seed: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Run until every message is delivered or the schedule ends.
    #[default]
    Messages,
    FirstElimination,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    /// C, in parcels.
    pub capacity: u64,
    /// P, in bits.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bits: u64,
    pub k: usize,
    /// Number of secret sets; must equal `k` when given.
    #[serde(default)]
    pub sets: Option<usize>,
    #[serde(default = "default_lambda_inv")]
    pub lambda_inv: u64,
    /// Overrides D = knC/λ.
    #[serde(default)]
    pub d: Option<u64>,
    #[serde(default)]
    pub modulus: Option<u64>,
    #[serde(default)]
    pub payload_bytes: Option<usize>,
    #[serde(default = "default_messages")]
    pub messages: usize,
    pub seed: u64,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub delivery: DeliveryPolicy,
    /// Activation budget.
    pub rounds: u64,
    #[serde(default)]
    pub corruption: CorruptionPlan,
    #[serde(default)]
    pub crypto: CryptoConfig,
    /// Quiescence horizon before F3; defaults to 4nD.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Hands χ to white-box strategies.
    #[serde(default)]
    pub cheat_injection: bool,
    #[serde(default)]
    pub stop: StopRule,
}

fn default_bandwidth() -> u64 {
    4096
}
fn default_lambda_inv() -> u64 {
    4
}
fn default_messages() -> usize {
    3
}
fn default_topology() -> Topology {
    Topology::Complete
}
fn default_schedule() -> ScheduleSpec {
    ScheduleSpec::Uniform
}

const MAX_PAYLOAD: usize = 64;

impl Scenario {
    pub fn from_json(s: &str) -> Result<Scenario, ScenarioError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let n = self.n as u16;
        match &self.topology {
            Topology::Complete => (0..n).flat_map(|a| (a + 1..n).map(move |b| (NodeId(a), NodeId(b)))).collect(),
            Topology::Line { order } => order.windows(2).map(|w| (w[0], w[1])).collect(),
            Topology::Edges { edges } => edges.clone(),
        }
    }

    pub fn neighbors(&self, u: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .edges()
            .into_iter()
            .filter_map(|(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn d(&self) -> u64 {
        self.d.unwrap_or_else(|| self.k as u64 * self.n as u64 * self.capacity * self.lambda_inv)
    }

    pub fn crypto_seed(&self) -> u64 {
        self.crypto.seed.unwrap_or(self.seed)
    }

    /// Checks every constraint and derives the frozen protocol constants.
    pub fn validate(&self) -> Result<Params, ScenarioError> {
        let n = self.n;
        if n < 3 {
            return Err(invalid("n >= 3", format!("n = {n}")));
        }
        if n > u16::MAX as usize {
            return Err(invalid("n fits a node id", format!("n = {n}")));
        }
        if self.k == 0 {
            return Err(invalid("k >= 1", "k = 0"));
        }
        if let Some(sets) = self.sets {
            if sets != self.k {
                return Err(invalid("K = k", format!("K = {sets}, k = {}", self.k)));
            }
        }
        let floor = 12 * (n as u64) * (n as u64);
        if self.capacity < floor {
            return Err(invalid("C >= 12n^2", format!("C = {}, 12n^2 = {floor}", self.capacity)));
        }
        if self.lambda_inv < 2 {
            return Err(invalid("integral lambda^-1 >= 2", format!("lambda^-1 = {}", self.lambda_inv)));
        }
        let d = self.d();
        if !d.is_multiple_of(self.lambda_inv) {
            return Err(invalid("lambda^-1 divides D", format!("D = {d}, lambda^-1 = {}", self.lambda_inv)));
        }
        let three_nd = 3u128 * n as u128 * d as u128;
        let modulus = match self.modulus {
            Some(m) => m,
            None => default_modulus(n as u64, d),
        };
        if (modulus as u128) <= three_nd {
            return Err(invalid("N > 3nD", format!("N = {modulus}, 3nD = {three_nd}")));
        }
        if self.k as u128 * self.capacity as u128 * d as u128 >= u64::MAX as u128 / 4 {
            return Err(invalid("kCD fits 64 bits", "potential threshold overflows"));
        }
        for c in &self.corruption.0 {
            if c.node.index() >= n {
                return Err(invalid("corrupt node exists", format!("{}", c.node)));
            }
            if c.node.index() == 0 || c.node.index() == n - 1 {
                return Err(invalid("Sender and Receiver are never corrupt", format!("{}", c.node)));
            }
        }
        let edges = self.edges();
        for &(a, b) in &edges {
            if a == b || a.index() >= n || b.index() >= n {
                return Err(invalid("edges join distinct existing nodes", format!("{a}-{b}")));
            }
        }
        if let Topology::Line { order } = &self.topology {
            let mut o = order.clone();
            o.sort();
            o.dedup();
            if o.len() != n || order.len() != n {
                return Err(invalid("line lists every node once", format!("{order:?}")));
            }
        }
        let mut params = Params {
            n,
            capacity: self.capacity,
            bandwidth_bits: self.bandwidth_bits,
            k: self.k,
            lambda_inv: self.lambda_inv,
            d,
            modulus,
            payload_bytes: 2,
            horizon: self.horizon.unwrap_or(4 * n as u64 * d),
        };
        let overhead = control_overhead_bits(&params, self.crypto.he_backend, self.crypto.sig_backend)
            .map_err(|e| invalid("HE context", e.to_string()))?;
        if overhead >= self.bandwidth_bits {
            return Err(invalid("P exceeds control overhead", format!("P = {}, overhead = {overhead}", self.bandwidth_bits)));
        }
        let room = ((self.bandwidth_bits - overhead) / 8) as usize;
        let payload = match self.payload_bytes {
            Some(p) => p,
            None => (room.min(MAX_PAYLOAD)) & !1,
        };
        if payload == 0 || payload % 2 != 0 {
            return Err(invalid("payload even and positive", format!("payload = {payload} bytes")));
        }
        if payload > room {
            return Err(invalid("payload <= P - control overhead", format!("payload = {payload} bytes, room = {room}")));
        }
        params.payload_bytes = payload;
        params.coding().validate().map_err(|e| invalid("erasure code", e.to_string()))?;
        Ok(params)
    }

    /// Messages of exactly one codeword's capacity, derived from the seed.
    pub fn message_bodies(&self, params: &Params) -> Vec<Vec<u8>> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x6d65_7373_6167_6573);
        (0..self.messages)
            .map(|_| {
                let mut m = vec![0u8; params.message_bytes()];
                rng.fill_bytes(&mut m);
                m
            })
            .collect()
    }
}

/// Bits of a packet carrying every control parcel at its largest and an
/// empty codeword payload.
pub fn control_overhead_bits(params: &Params, he: HeBackend, sig: SigBackend) -> Result<u64, crate::crypto::CryptoError> {
    let ctx = HeContext::generate(he, params.modulus, params.k, 0)?;
    let s = Signature::from_slice(&vec![0xA5; signature_len(sig)]).unwrap();
    let n = params.n;
    let big = |ctx: &HeContext| -> EdgeRecord {
        let mut r = EdgeRecord::new(NodeId(0), NodeId(1), u64::MAX, ctx);
        r.stamp = u64::MAX;
        r
    };
    let pkt = Packet {
        from: NodeId(0),
        to: NodeId(1),
        transmission: u64::MAX,
        height: Height::Value(u64::MAX - 1),
        codeword: Some(std::sync::Arc::new(CodewordParcel {
            transmission: u64::MAX,
            message_seq: u64::MAX,
            index: u32::MAX,
            payload: Vec::new(),
            tag: ctx.zero(),
            signature: s,
        })),
        alert: Some(AlertParcel {
            origin: AlertOrigin::Sender,
            transmission: u64::MAX,
            index: 0,
            total: 2 * n as u16,
            version: u32::MAX,
            kind: AlertKind::NodeFlag { node: NodeId(1), flag: NodeFlag::Blacklisted(u64::MAX) },
            signature: s,
        }),
        status: Some(StatusParcel { from: NodeId(0), record: big(&ctx), signature: s, countersig: Some(s) }),
        potential: Some(PotentialParcel { node: NodeId(0), transmission: u64::MAX, phi: u64::MAX, stamp: u64::MAX, signature: s }),
        testimony: Some(std::sync::Arc::new(TestimonyParcel {
            owner: NodeId(0),
            transmission: u64::MAX,
            entry: TestimonyEntry { peer: NodeId(1), record: big(&ctx), psi_node: ctx.zero() },
            signature: s,
        })),
        signature: s,
    };
    Ok(wire::encoded_len(&pkt) as u64 * 8)
}
