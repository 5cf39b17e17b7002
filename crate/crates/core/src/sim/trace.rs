//! Per-round trace events and their digest.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::endpoints::TransmissionReport;
use crate::model::NodeId;
use crate::node::SideEvent;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// Nothing recorded.
    Off,
    /// Only a running hash of the events.
    #[default]
    Digest,
    /// Every event kept in memory.
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub round: u64,
    pub edge: (NodeId, NodeId),
    pub sides: [SideEvent; 2],
    /// Packets dropped for exceeding P.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub oversize: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<TransmissionReport>,
}

fn is_zero(x: &u8) -> bool {
    *x == 0
}

pub struct TraceLog {
    mode: TraceMode,
    hasher: blake3::Hasher,
    pub events: Vec<TraceEvent>,
    line: Vec<u8>,
}

impl TraceLog {
    pub fn new(mode: TraceMode) -> TraceLog {
        TraceLog { mode, hasher: blake3::Hasher::new(), events: Vec::new(), line: Vec::new() }
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn push(&mut self, ev: TraceEvent) {
        if self.mode == TraceMode::Off {
            return;
        }
        self.line.clear();
        serde_json::to_writer(&mut self.line, &ev).expect("trace event serializes");
        self.line.push(b'\n');
        self.hasher.update(&self.line);
        if self.mode == TraceMode::Full {
            self.events.push(ev);
        }
    }

    /// Hex digest of the JSON-lines rendering of every event so far.
    pub fn digest(&self) -> Option<String> {
        (self.mode != TraceMode::Off).then(|| self.hasher.finalize().to_hex().to_string())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Branch;

    fn event(round: u64) -> TraceEvent {
        let side = |u: u16| SideEvent {
            node: NodeId(u),
            branch: Branch::Idle,
            h_old: None,
            h_v: None,
            parcel: None,
            phi: 0,
            control: String::new(),
        };
        TraceEvent { round, edge: (NodeId(0), NodeId(1)), sides: [side(0), side(1)], oversize: 0, closed: None }
    }

    #[test]
    fn digest_covers_the_written_lines() {
        let mut full = TraceLog::new(TraceMode::Full);
        let mut digest = TraceLog::new(TraceMode::Digest);
        for r in 0..5 {
            full.push(event(r));
            digest.push(event(r));
        }
        assert!(digest.events.is_empty());
        assert_eq!(full.digest(), digest.digest());
        let mut bytes = Vec::new();
        full.write_jsonl(&mut bytes).unwrap();
        assert_eq!(full.digest().unwrap(), blake3::hash(&bytes).to_hex().to_string());
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 5);
    }

    #[test]
    fn off_records_nothing() {
        let mut t = TraceLog::new(TraceMode::Off);
        t.push(event(0));
        assert!(t.events.is_empty());
        assert_eq!(t.digest(), None);
    }

    #[test]
    fn quiet_fields_are_omitted() {
        let line = serde_json::to_string(&event(3)).unwrap();
        assert!(!line.contains("oversize") && !line.contains("closed"));
        let back: TraceEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, event(3));
    }
}
