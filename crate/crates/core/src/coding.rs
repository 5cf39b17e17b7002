//! Systematic Reed-Solomon dispersal of a message into D parcels.
//!
//! The first `(1-λ)D` payloads are the message itself; the remaining `λD` are
//! recovery shards over GF(2^16). Any `(1-λ)D` distinct parcels reconstruct
//! the message.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodingError {
    #[error("message is {got} bytes, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("{have} distinct parcels, need {need}")]
    InsufficientParcels { have: usize, need: usize },
    #[error("parcel {index} is inconsistent: {reason}")]
    CorruptParcel { index: u32, reason: &'static str },
    #[error("invalid coding parameters: {0}")]
    InvalidParams(String),
    #[error("codec failure: {0}")]
    Codec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingParams {
    /// Total parcels per codeword.
    pub d: usize,
    /// λ⁻¹; λD parcels are redundancy.
    pub lambda_inv: usize,
    /// Bytes per parcel payload; must be even.
    pub payload_bytes: usize,
}

impl CodingParams {
    pub fn new(d: usize, lambda_inv: usize, payload_bytes: usize) -> Result<CodingParams, CodingError> {
        let p = CodingParams { d, lambda_inv, payload_bytes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodingError> {
        if self.lambda_inv < 2 {
            return Err(CodingError::InvalidParams("λ⁻¹ must be an integer ≥ 2".into()));
        }
        if self.d == 0 || !self.d.is_multiple_of(self.lambda_inv) {
            return Err(CodingError::InvalidParams(format!("D={} not divisible by λ⁻¹={}", self.d, self.lambda_inv)));
        }
        if self.payload_bytes == 0 || !self.payload_bytes.is_multiple_of(2) {
            return Err(CodingError::InvalidParams("payload bytes must be even and positive".into()));
        }
        if self.d > 32768 {
            return Err(CodingError::InvalidParams("D above 32768 unsupported".into()));
        }
        Ok(())
    }

    /// Parcels needed to decode: (1-λ)D.
    pub fn data_parcels(&self) -> usize {
        self.d - self.d / self.lambda_inv
    }

    pub fn recovery_parcels(&self) -> usize {
        self.d / self.lambda_inv
    }

    pub fn message_bytes(&self) -> usize {
        self.data_parcels() * self.payload_bytes
    }
}

/// Splits `message` into D payloads.
pub fn encode(message: &[u8], params: &CodingParams) -> Result<Vec<Vec<u8>>, CodingError> {
    params.validate()?;
    if message.len() != params.message_bytes() {
        return Err(CodingError::SizeMismatch { expected: params.message_bytes(), got: message.len() });
    }
    let originals: Vec<&[u8]> = message.chunks(params.payload_bytes).collect();
    let recovery = reed_solomon_simd::encode(params.data_parcels(), params.recovery_parcels(), &originals)
        .map_err(|e| CodingError::Codec(e.to_string()))?;
    let mut out: Vec<Vec<u8>> = originals.into_iter().map(|c| c.to_vec()).collect();
    out.extend(recovery);
    Ok(out)
}

/// Reconstructs the message from `(index, payload)` pairs. Repeated indices
/// count once; a repeated index with a different payload is corrupt.
pub fn decode<'a, I>(parcels: I, params: &CodingParams) -> Result<Vec<u8>, CodingError>
where
    I: IntoIterator<Item = (u32, &'a [u8])>,
{
    params.validate()?;
    let mut support: BTreeMap<u32, &[u8]> = BTreeMap::new();
    for (index, payload) in parcels {
        if index as usize >= params.d {
            return Err(CodingError::CorruptParcel { index, reason: "index beyond D" });
        }
        if payload.len() != params.payload_bytes {
            return Err(CodingError::CorruptParcel { index, reason: "payload length" });
        }
        if let Some(prev) = support.insert(index, payload) {
            if prev != payload {
                return Err(CodingError::CorruptParcel { index, reason: "conflicting payloads" });
            }
        }
    }
    let k = params.data_parcels();
    if support.len() < k {
        return Err(CodingError::InsufficientParcels { have: support.len(), need: k });
    }
    let have_all_data = (0..k as u32).all(|i| support.contains_key(&i));
    let mut restored = BTreeMap::new();
    if !have_all_data {
        let originals = support.iter().filter(|(i, _)| (**i as usize) < k).map(|(i, p)| (*i as usize, *p));
        let recovery = support.iter().filter(|(i, _)| (**i as usize) >= k).map(|(i, p)| (*i as usize - k, *p));
        restored = reed_solomon_simd::decode(k, params.recovery_parcels(), originals, recovery)
            .map_err(|e| CodingError::Codec(e.to_string()))?
            .into_iter()
            .collect();
    }
    let mut msg = Vec::with_capacity(params.message_bytes());
    for i in 0..k {
        match support.get(&(i as u32)) {
            Some(p) => msg.extend_from_slice(p),
            None => msg.extend_from_slice(&restored[&i]),
        }
    }
    Ok(msg)
}
