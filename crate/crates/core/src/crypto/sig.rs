//! Signature schemes behind one interface.
//!
//! `KeyedHash` is a fast stand-in for simulation: the verification key is the
//! MAC key itself, so it only models unforgeability against code that is never
//! handed other nodes' keys. `Ed25519` is a real scheme.

use ed25519_dalek::{Signer as _, Verifier as _};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::model::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigBackend {
    #[default]
    KeyedHash,
    Ed25519,
}

const KEYED_LEN: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    len: u8,
    bytes: [u8; 64],
}

impl Signature {
    pub fn from_slice(b: &[u8]) -> Option<Signature> {
        if b.len() > 64 {
            return None;
        }
        let mut bytes = [0u8; 64];
        bytes[..b.len()].copy_from_slice(b);
        Some(Signature { len: b.len() as u8, bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    /// A signature that verifies under no key.
    pub fn empty() -> Signature {
        Signature { len: 0, bytes: [0; 64] }
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Sig(")?;
        for b in self.as_bytes().iter().take(6) {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

#[derive(Clone)]
enum SigningInner {
    Keyed([u8; 32]),
    Ed(Box<ed25519_dalek::SigningKey>),
}

#[derive(Clone)]
pub struct SigningKey {
    owner: NodeId,
    inner: SigningInner,
}

#[derive(Clone, PartialEq, Eq)]
pub enum VerifyingKey {
    Keyed([u8; 32]),
    Ed(ed25519_dalek::VerifyingKey),
}

#[derive(Clone)]
pub struct SignatureKeyPair {
    pub owner: NodeId,
    pub signing_key: SigningKey,
    pub verification_key: VerifyingKey,
}

impl SigningKey {
    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        match &self.inner {
            SigningInner::Keyed(k) => {
                let h = blake3::keyed_hash(k, msg);
                Signature::from_slice(&h.as_bytes()[..KEYED_LEN]).unwrap()
            }
            SigningInner::Ed(k) => Signature::from_slice(&k.sign(msg).to_bytes()).unwrap(),
        }
    }
}

impl VerifyingKey {
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        match self {
            VerifyingKey::Keyed(k) => {
                let h = blake3::keyed_hash(k, msg);
                sig.as_bytes() == &h.as_bytes()[..KEYED_LEN]
            }
            VerifyingKey::Ed(vk) => {
                let Ok(arr) = <[u8; 64]>::try_from(sig.as_bytes()) else {
                    return false;
                };
                vk.verify(msg, &ed25519_dalek::Signature::from_bytes(&arr)).is_ok()
            }
        }
    }
}

/// Deterministic key material for nodes `0..n`.
pub fn keygen_signatures(backend: SigBackend, seed: u64, n: usize) -> Vec<SignatureKeyPair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5167_6e61_7475_7265);
    (0..n)
        .map(|i| {
            let owner = NodeId(i as u16);
            let mut secret = [0u8; 32];
            rand::RngCore::fill_bytes(&mut rng, &mut secret);
            match backend {
                SigBackend::KeyedHash => SignatureKeyPair {
                    owner,
                    signing_key: SigningKey { owner, inner: SigningInner::Keyed(secret) },
                    verification_key: VerifyingKey::Keyed(secret),
                },
                SigBackend::Ed25519 => {
                    let sk = ed25519_dalek::SigningKey::from_bytes(&secret);
                    let vk = sk.verifying_key();
                    SignatureKeyPair {
                        owner,
                        signing_key: SigningKey { owner, inner: SigningInner::Ed(Box::new(sk)) },
                        verification_key: VerifyingKey::Ed(vk),
                    }
                }
            }
        })
        .collect()
}

/// Public verification keys of every node, shared read-only by all nodes.
#[derive(Clone)]
pub struct Keyring {
    keys: Vec<VerifyingKey>,
}

impl Keyring {
    pub fn new(pairs: &[SignatureKeyPair]) -> Keyring {
        Keyring { keys: pairs.iter().map(|p| p.verification_key.clone()).collect() }
    }

    pub fn verify(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        match self.keys.get(signer.index()) {
            Some(k) => k.verify(msg, sig),
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Signature length in bytes for a backend.
pub fn signature_len(backend: SigBackend) -> usize {
    match backend {
        SigBackend::KeyedHash => KEYED_LEN,
        SigBackend::Ed25519 => 64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keygen_is_deterministic() {
        for backend in [SigBackend::KeyedHash, SigBackend::Ed25519] {
            let a = keygen_signatures(backend, 9, 4);
            let b = keygen_signatures(backend, 9, 4);
            for (x, y) in a.iter().zip(&b) {
                assert!(x.verification_key == y.verification_key);
                assert_eq!(x.signing_key.sign(b"m"), y.signing_key.sign(b"m"));
            }
        }
    }

    #[test]
    fn sign_verify_and_cross_key_rejection() {
        for backend in [SigBackend::KeyedHash, SigBackend::Ed25519] {
            let keys = keygen_signatures(backend, 1, 3);
            let ring = Keyring::new(&keys);
            let sig = keys[0].signing_key.sign(b"hello");
            assert_eq!(sig.as_bytes().len(), signature_len(backend));
            assert!(ring.verify(NodeId(0), b"hello", &sig));
            assert!(!ring.verify(NodeId(1), b"hello", &sig));
            assert!(!ring.verify(NodeId(0), b"hellp", &sig));
            assert!(!ring.verify(NodeId(0), b"hello", &Signature::empty()));
            assert!(!ring.verify(NodeId(7), b"hello", &sig));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = keygen_signatures(SigBackend::KeyedHash, 1, 2);
        let b = keygen_signatures(SigBackend::KeyedHash, 2, 2);
        assert_ne!(a[0].signing_key.sign(b"x"), b[0].signing_key.sign(b"x"));
    }
}
