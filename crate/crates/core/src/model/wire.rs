//! Versioned binary packet encoding.
//!
//! Fixed field order, little-endian integers, u32 length prefixes for byte
//! strings, and one presence byte ahead of each optional parcel. The layout is
//! documented in `docs/wire.md`.

use std::sync::Arc;

use super::packet::*;
use super::{NodeId, Outcome};
use crate::crypto::{HeData, HeVector, Signature};

pub const WIRE_VERSION: u8 = 1;

pub(crate) const DOMAIN_CODEWORD: u8 = 0xC0;
pub(crate) const DOMAIN_ALERT: u8 = 0xA1;
pub(crate) const DOMAIN_STATUS: u8 = 0x57;
pub(crate) const DOMAIN_POTENTIAL: u8 = 0x50;
pub(crate) const DOMAIN_TESTIMONY: u8 = 0x7E;
pub(crate) const DOMAIN_PACKET: u8 = 0x9A;

const HEIGHT_HALT: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("packet is {bits} bits, bandwidth is {limit}")]
    OversizePacket { bits: u64, limit: u64 },
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("invalid {what} tag {tag}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

pub(crate) fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub(crate) fn put_sig(out: &mut Vec<u8>, s: &Signature) {
    out.push(s.as_bytes().len() as u8);
    out.extend_from_slice(s.as_bytes());
}
fn put_node(out: &mut Vec<u8>, n: NodeId) {
    put_u16(out, n.0);
}

fn put_coord(out: &mut Vec<u8>, v: u64, width: u8) {
    out.extend_from_slice(&v.to_le_bytes()[..width as usize]);
}

pub(crate) fn put_hevec(out: &mut Vec<u8>, v: &HeVector) {
    let (tag, k) = match v.data() {
        HeData::Plain { coords, .. } => (0u8, coords.len()),
        HeData::Pairs(p) => (1u8, p.len()),
    };
    out.push(tag);
    put_u64(out, v.context_id());
    put_u16(out, k as u16);
    out.push(v.width());
    match v.data() {
        HeData::Plain { coords, nonce } => {
            for c in coords {
                put_coord(out, *c, v.width());
            }
            put_u64(out, *nonce);
        }
        HeData::Pairs(p) => {
            for (a, b) in p {
                put_coord(out, *a, v.width());
                put_coord(out, *b, v.width());
            }
        }
    }
}

fn hevec_len(v: &HeVector) -> usize {
    let w = v.width() as usize;
    12 + match v.data() {
        HeData::Plain { coords, .. } => coords.len() * w + 8,
        HeData::Pairs(p) => p.len() * 2 * w,
    }
}

pub(crate) fn put_codeword_body(out: &mut Vec<u8>, c: &CodewordParcel) {
    put_u64(out, c.transmission);
    put_u64(out, c.message_seq);
    put_u32(out, c.index);
    put_u32(out, c.payload.len() as u32);
    out.extend_from_slice(&c.payload);
    put_hevec(out, &c.tag);
}

fn outcome_code(o: Option<Outcome>) -> u8 {
    match o {
        None => 0,
        Some(Outcome::S1) => 1,
        Some(Outcome::F2) => 2,
        Some(Outcome::F3) => 3,
        Some(Outcome::F4) => 4,
    }
}

pub(crate) fn put_alert_body(out: &mut Vec<u8>, a: &AlertParcel) {
    out.push(match a.origin {
        AlertOrigin::Sender => 0,
        AlertOrigin::Receiver => 1,
    });
    put_u64(out, a.transmission);
    put_u16(out, a.index);
    put_u16(out, a.total);
    put_u32(out, a.version);
    match a.kind {
        AlertKind::PrevStatus(o) => {
            out.push(0);
            out.push(outcome_code(o));
        }
        AlertKind::FailedStamp(t) => {
            out.push(1);
            put_u64(out, t);
        }
        AlertKind::NodeFlag { node, flag } => {
            out.push(2);
            put_node(out, node);
            match flag {
                NodeFlag::Clear => out.push(0),
                NodeFlag::Blacklisted(t) => {
                    out.push(1);
                    put_u64(out, t);
                }
                NodeFlag::Eliminated => out.push(2),
            }
        }
        AlertKind::BlacklistRemoval { node } => {
            out.push(3);
            put_node(out, node);
        }
        AlertKind::ReceiverDecoded { message_seq } => {
            out.push(4);
            put_u64(out, message_seq);
        }
        AlertKind::ReceiverInconsistent => out.push(5),
    }
}

fn put_dir(out: &mut Vec<u8>, d: &DirRecord) {
    put_u64(out, d.count);
    put_u64(out, d.sender_heights);
    put_u64(out, d.receiver_heights);
    put_hevec(out, &d.psi);
}

pub(crate) fn put_edge_record(out: &mut Vec<u8>, r: &EdgeRecord) {
    put_node(out, r.lo);
    put_node(out, r.hi);
    put_u64(out, r.transmission);
    put_u64(out, r.stamp);
    put_dir(out, &r.up);
    put_dir(out, &r.down);
}

fn edge_record_len(r: &EdgeRecord) -> usize {
    20 + 2 * 24 + hevec_len(&r.up.psi) + hevec_len(&r.down.psi)
}

pub(crate) fn put_potential_body(out: &mut Vec<u8>, p: &PotentialParcel) {
    put_node(out, p.node);
    put_u64(out, p.transmission);
    put_u64(out, p.phi);
    put_u64(out, p.stamp);
}

pub(crate) fn put_testimony_body(out: &mut Vec<u8>, t: &TestimonyParcel) {
    put_node(out, t.owner);
    put_u64(out, t.transmission);
    put_node(out, t.entry.peer);
    put_edge_record(out, &t.entry.record);
    put_hevec(out, &t.entry.psi_node);
}

pub(crate) fn put_packet_header(out: &mut Vec<u8>, p: &Packet) {
    out.push(WIRE_VERSION);
    put_node(out, p.from);
    put_node(out, p.to);
    put_u64(out, p.transmission);
    put_u64(
        out,
        match p.height {
            Height::Value(h) => h,
            Height::Halt => HEIGHT_HALT,
        },
    );
}

/// Encodes without the bandwidth check.
pub fn encode_packet(p: &Packet) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(p));
    put_packet_header(&mut out, p);
    match &p.codeword {
        Some(c) => {
            out.push(1);
            put_codeword_body(&mut out, c);
            put_sig(&mut out, &c.signature);
        }
        None => out.push(0),
    }
    match &p.alert {
        Some(a) => {
            out.push(1);
            put_alert_body(&mut out, a);
            put_sig(&mut out, &a.signature);
        }
        None => out.push(0),
    }
    match &p.status {
        Some(s) => {
            out.push(1);
            put_node(&mut out, s.from);
            put_edge_record(&mut out, &s.record);
            put_sig(&mut out, &s.signature);
            match &s.countersig {
                Some(c) => {
                    out.push(1);
                    put_sig(&mut out, c);
                }
                None => out.push(0),
            }
        }
        None => out.push(0),
    }
    match &p.potential {
        Some(x) => {
            out.push(1);
            put_potential_body(&mut out, x);
            put_sig(&mut out, &x.signature);
        }
        None => out.push(0),
    }
    match &p.testimony {
        Some(t) => {
            out.push(1);
            put_testimony_body(&mut out, t);
            put_sig(&mut out, &t.signature);
        }
        None => out.push(0),
    }
    put_sig(&mut out, &p.signature);
    out
}

fn sig_len(s: &Signature) -> usize {
    1 + s.as_bytes().len()
}

fn alert_kind_len(k: &AlertKind) -> usize {
    1 + match k {
        AlertKind::PrevStatus(_) => 1,
        AlertKind::FailedStamp(_) => 8,
        AlertKind::NodeFlag { flag, .. } => {
            2 + match flag {
                NodeFlag::Blacklisted(_) => 9,
                _ => 1,
            }
        }
        AlertKind::BlacklistRemoval { .. } => 2,
        AlertKind::ReceiverDecoded { .. } => 8,
        AlertKind::ReceiverInconsistent => 0,
    }
}

/// Exact length of [`encode_packet`]'s output, computed without encoding.
pub fn encoded_len(p: &Packet) -> usize {
    let mut len = 21 + 5 + sig_len(&p.signature);
    if let Some(c) = &p.codeword {
        len += 24 + c.payload.len() + hevec_len(&c.tag) + sig_len(&c.signature);
    }
    if let Some(a) = &p.alert {
        len += 17 + alert_kind_len(&a.kind) + sig_len(&a.signature);
    }
    if let Some(s) = &p.status {
        len += 2 + edge_record_len(&s.record) + sig_len(&s.signature) + 1 + s.countersig.as_ref().map_or(0, sig_len);
    }
    if let Some(x) = &p.potential {
        len += 26 + sig_len(&x.signature);
    }
    if let Some(t) = &p.testimony {
        len += 12 + edge_record_len(&t.entry.record) + hevec_len(&t.entry.psi_node) + sig_len(&t.signature);
    }
    len
}

/// Encoded sizes of single parcels, in bytes, as they appear in a packet.
pub fn codeword_len(c: &CodewordParcel) -> usize {
    24 + c.payload.len() + hevec_len(&c.tag) + sig_len(&c.signature)
}

pub fn alert_len(a: &AlertParcel) -> usize {
    17 + alert_kind_len(&a.kind) + sig_len(&a.signature)
}

pub fn status_len(record: &EdgeRecord, sig: &Signature, countersig: Option<&Signature>) -> usize {
    2 + edge_record_len(record) + sig_len(sig) + 1 + countersig.map_or(0, sig_len)
}

pub fn potential_len(p: &PotentialParcel) -> usize {
    26 + sig_len(&p.signature)
}

pub fn testimony_len(t: &TestimonyParcel) -> usize {
    12 + edge_record_len(&t.entry.record) + hevec_len(&t.entry.psi_node) + sig_len(&t.signature)
}

/// Encodes and enforces the bandwidth of `limit_bits`.
pub fn serialize_packet(p: &Packet, limit_bits: u64) -> Result<Vec<u8>, WireError> {
    let bits = encoded_len(p) as u64 * 8;
    if bits > limit_bits {
        return Err(WireError::OversizePacket { bits, limit: limit_bits });
    }
    Ok(encode_packet(p))
}

pub fn fits(p: &Packet, limit_bits: u64) -> bool {
    encoded_len(p) as u64 * 8 <= limit_bits
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn node(&mut self) -> Result<NodeId, WireError> {
        Ok(NodeId(self.u16()?))
    }
    fn coord(&mut self, width: u8) -> Result<u64, WireError> {
        if width == 0 || width > 8 {
            return Err(WireError::BadTag { what: "coordinate width", tag: width });
        }
        let mut b = [0u8; 8];
        b[..width as usize].copy_from_slice(self.take(width as usize)?);
        Ok(u64::from_le_bytes(b))
    }
    fn sig(&mut self) -> Result<Signature, WireError> {
        let len = self.u8()?;
        if len > 64 {
            return Err(WireError::BadTag { what: "signature length", tag: len });
        }
        Ok(Signature::from_slice(self.take(len as usize)?).unwrap())
    }
    fn flag(&mut self, what: &'static str) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(WireError::BadTag { what, tag }),
        }
    }
    fn hevec(&mut self) -> Result<HeVector, WireError> {
        let tag = self.u8()?;
        let ctx = self.u64()?;
        let k = self.u16()? as usize;
        let width = self.u8()?;
        let data = match tag {
            0 => {
                let coords = (0..k).map(|_| self.coord(width)).collect::<Result<_, _>>()?;
                HeData::Plain { coords, nonce: self.u64()? }
            }
            1 => HeData::Pairs((0..k).map(|_| Ok((self.coord(width)?, self.coord(width)?))).collect::<Result<_, _>>()?),
            tag => return Err(WireError::BadTag { what: "ciphertext backend", tag }),
        };
        Ok(HeVector::from_parts(ctx, width, data))
    }
    fn dir(&mut self) -> Result<DirRecord, WireError> {
        Ok(DirRecord { count: self.u64()?, sender_heights: self.u64()?, receiver_heights: self.u64()?, psi: self.hevec()? })
    }
    fn edge_record(&mut self) -> Result<EdgeRecord, WireError> {
        Ok(EdgeRecord {
            lo: self.node()?,
            hi: self.node()?,
            transmission: self.u64()?,
            stamp: self.u64()?,
            up: self.dir()?,
            down: self.dir()?,
        })
    }
    fn outcome(&mut self) -> Result<Option<Outcome>, WireError> {
        Ok(match self.u8()? {
            0 => None,
            1 => Some(Outcome::S1),
            2 => Some(Outcome::F2),
            3 => Some(Outcome::F3),
            4 => Some(Outcome::F4),
            tag => return Err(WireError::BadTag { what: "outcome", tag }),
        })
    }
    fn alert(&mut self) -> Result<AlertParcel, WireError> {
        let origin = match self.u8()? {
            0 => AlertOrigin::Sender,
            1 => AlertOrigin::Receiver,
            tag => return Err(WireError::BadTag { what: "alert origin", tag }),
        };
        let transmission = self.u64()?;
        let index = self.u16()?;
        let total = self.u16()?;
        let version = self.u32()?;
        let kind = match self.u8()? {
            0 => AlertKind::PrevStatus(self.outcome()?),
            1 => AlertKind::FailedStamp(self.u64()?),
            2 => {
                let node = self.node()?;
                let flag = match self.u8()? {
                    0 => NodeFlag::Clear,
                    1 => NodeFlag::Blacklisted(self.u64()?),
                    2 => NodeFlag::Eliminated,
                    tag => return Err(WireError::BadTag { what: "node flag", tag }),
                };
                AlertKind::NodeFlag { node, flag }
            }
            3 => AlertKind::BlacklistRemoval { node: self.node()? },
            4 => AlertKind::ReceiverDecoded { message_seq: self.u64()? },
            5 => AlertKind::ReceiverInconsistent,
            tag => return Err(WireError::BadTag { what: "alert kind", tag }),
        };
        Ok(AlertParcel { origin, transmission, index, total, version, kind, signature: self.sig()? })
    }
}

pub fn deserialize_packet(buf: &[u8]) -> Result<Packet, WireError> {
    let mut r = Reader { buf, pos: 0 };
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(WireError::Version(version));
    }
    let from = r.node()?;
    let to = r.node()?;
    let transmission = r.u64()?;
    let height = match r.u64()? {
        HEIGHT_HALT => Height::Halt,
        h => Height::Value(h),
    };
    let codeword = if r.flag("codeword presence")? {
        let transmission = r.u64()?;
        let message_seq = r.u64()?;
        let index = r.u32()?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?.to_vec();
        let tag = r.hevec()?;
        Some(Arc::new(CodewordParcel { transmission, message_seq, index, payload, tag, signature: r.sig()? }))
    } else {
        None
    };
    let alert = if r.flag("alert presence")? { Some(r.alert()?) } else { None };
    let status = if r.flag("status presence")? {
        let from = r.node()?;
        let record = r.edge_record()?;
        let signature = r.sig()?;
        let countersig = if r.flag("countersignature presence")? { Some(r.sig()?) } else { None };
        Some(StatusParcel { from, record, signature, countersig })
    } else {
        None
    };
    let potential = if r.flag("potential presence")? {
        Some(PotentialParcel { node: r.node()?, transmission: r.u64()?, phi: r.u64()?, stamp: r.u64()?, signature: r.sig()? })
    } else {
        None
    };
    let testimony = if r.flag("testimony presence")? {
        let owner = r.node()?;
        let transmission = r.u64()?;
        let peer = r.node()?;
        let record = r.edge_record()?;
        let psi_node = r.hevec()?;
        Some(Arc::new(TestimonyParcel {
            owner,
            transmission,
            entry: TestimonyEntry { peer, record, psi_node },
            signature: r.sig()?,
        }))
    } else {
        None
    };
    let signature = r.sig()?;
    if r.pos != buf.len() {
        return Err(WireError::Trailing(buf.len() - r.pos));
    }
    Ok(Packet { from, to, transmission, height, codeword, alert, status, potential, testimony, signature })
}
