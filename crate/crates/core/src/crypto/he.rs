//! Additively homomorphic encryption over Z_N^K.
//!
//! Two backends share one interface. `Transparent` keeps plaintext
//! coordinates next to a random nonce; it is only as hiding as the code that
//! handles it, which is why strategy hooks never receive tag plaintexts.
//! `ExpElgamal` is exponential ElGamal in the order-N subgroup of Z_p^*, with
//! baby-step giant-step decryption over the whole of Z_N.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::prime::{inv_mod_prime, is_prime, mul_mod, pow_mod};
use super::CryptoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeBackend {
    #[default]
    Transparent,
    ExpElgamal,
}

impl std::str::FromStr for HeBackend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transparent" => Ok(HeBackend::Transparent),
            "exp-elgamal" => Ok(HeBackend::ExpElgamal),
            other => Err(format!("unknown HE backend `{other}`")),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum HeData {
    Plain { coords: Vec<u64>, nonce: u64 },
    Pairs(Vec<(u64, u64)>),
}

/// K ciphertexts under one context.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct HeVector {
    pub(crate) ctx: u64,
    pub(crate) width: u8,
    pub(crate) data: HeData,
}

impl HeVector {
    pub fn context_id(&self) -> u64 {
        self.ctx
    }

    pub fn len(&self) -> usize {
        match &self.data {
            HeData::Plain { coords, .. } => coords.len(),
            HeData::Pairs(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &HeData {
        &self.data
    }

    /// Bytes per encoded coordinate.
    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn from_parts(ctx: u64, width: u8, data: HeData) -> HeVector {
        HeVector { ctx, width, data }
    }
}

#[derive(Debug)]
struct Group {
    p: u64,
    g: u64,
    y: u64,
}

struct Secret {
    x: u64,
    table: OnceLock<Bsgs>,
}

struct Bsgs {
    step: u64,
    baby: HashMap<u64, u64>,
    giant: u64,
}

/// Encryption context. Cloning shares the (optional) secret key; use
/// [`HeContext::public`] to hand a context to anything but the Sender.
#[derive(Clone)]
pub struct HeContext {
    id: u64,
    backend: HeBackend,
    modulus: u64,
    k: usize,
    group: Option<Arc<Group>>,
    secret: Option<Arc<Secret>>,
}

impl std::fmt::Debug for HeContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeContext")
            .field("id", &self.id)
            .field("backend", &self.backend)
            .field("modulus", &self.modulus)
            .field("k", &self.k)
            .field("has_secret", &self.secret.is_some())
            .finish()
    }
}

fn byte_width(max: u64) -> u8 {
    (((64 - max.leading_zeros()) as u8).div_ceil(8)).max(1)
}

impl HeContext {
    /// Generates a fresh key pair. `modulus` must be prime for `ExpElgamal`.
    pub fn generate(backend: HeBackend, modulus: u64, k: usize, seed: u64) -> Result<HeContext, CryptoError> {
        if k == 0 {
            return Err(CryptoError::IndexOutOfRange { index: 0, k });
        }
        if modulus < 2 {
            return Err(CryptoError::BadModulus(modulus));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x4845_4b65_7967_656e);
        let id = rng.next_u64();
        match backend {
            HeBackend::Transparent => Ok(HeContext {
                id,
                backend,
                modulus,
                k,
                group: None,
                secret: Some(Arc::new(Secret { x: 0, table: OnceLock::new() })),
            }),
            HeBackend::ExpElgamal => {
                if !is_prime(modulus) || modulus >= 1 << 40 {
                    return Err(CryptoError::BadModulus(modulus));
                }
                let mut m = ((1u64 << 61) / modulus) & !1;
                if m == 0 {
                    m = 2;
                }
                let p = loop {
                    let cand = modulus * m + 1;
                    if is_prime(cand) {
                        break cand;
                    }
                    m += 2;
                };
                let g = loop {
                    let h = rng.gen_range(2..p - 1);
                    let g = pow_mod(h, m, p);
                    if g != 1 {
                        break g;
                    }
                };
                let x = rng.gen_range(1..modulus);
                let y = pow_mod(g, x, p);
                Ok(HeContext {
                    id,
                    backend,
                    modulus,
                    k,
                    group: Some(Arc::new(Group { p, g, y })),
                    secret: Some(Arc::new(Secret { x, table: OnceLock::new() })),
                })
            }
        }
    }

    /// The same context without the secret key.
    pub fn public(&self) -> HeContext {
        HeContext { secret: None, ..self.clone() }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn backend(&self) -> HeBackend {
        self.backend
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_secret(&self) -> bool {
        self.secret.is_some()
    }

    fn width(&self) -> u8 {
        match &self.group {
            None => byte_width(self.modulus - 1),
            Some(g) => byte_width(g.p - 1),
        }
    }

    /// Deterministic encryption of the zero vector.
    pub fn zero(&self) -> HeVector {
        let data = match self.backend {
            HeBackend::Transparent => HeData::Plain { coords: vec![0; self.k], nonce: 0 },
            HeBackend::ExpElgamal => HeData::Pairs(vec![(1, 1); self.k]),
        };
        HeVector { ctx: self.id, width: self.width(), data }
    }

    /// Encrypts the unit vector e_i; `i` is 1-based.
    pub fn encrypt_unit<R: RngCore + ?Sized>(&self, i: usize, rng: &mut R) -> Result<HeVector, CryptoError> {
        if i == 0 || i > self.k {
            return Err(CryptoError::IndexOutOfRange { index: i, k: self.k });
        }
        let mut v = vec![0u64; self.k];
        v[i - 1] = 1;
        self.encrypt(&v, rng)
    }

    /// Encrypts an arbitrary vector in Z_N^K (coordinates reduced mod N).
    pub fn encrypt<R: RngCore + ?Sized>(&self, values: &[u64], rng: &mut R) -> Result<HeVector, CryptoError> {
        if values.len() != self.k {
            return Err(CryptoError::LengthMismatch { expected: self.k, got: values.len() });
        }
        let data = match &self.group {
            None => HeData::Plain {
                coords: values.iter().map(|v| v % self.modulus).collect(),
                nonce: rng.next_u64(),
            },
            Some(g) => HeData::Pairs(
                values
                    .iter()
                    .map(|v| {
                        let r = rng.gen_range(1..self.modulus);
                        let c1 = pow_mod(g.g, r, g.p);
                        let c2 = mul_mod(pow_mod(g.g, v % self.modulus, g.p), pow_mod(g.y, r, g.p), g.p);
                        (c1, c2)
                    })
                    .collect(),
            ),
        };
        Ok(HeVector { ctx: self.id, width: self.width(), data })
    }

    fn check(&self, v: &HeVector) -> Result<(), CryptoError> {
        if v.ctx != self.id || v.len() != self.k {
            return Err(CryptoError::ContextMismatch);
        }
        match (&v.data, self.backend) {
            (HeData::Plain { .. }, HeBackend::Transparent) | (HeData::Pairs(_), HeBackend::ExpElgamal) => Ok(()),
            _ => Err(CryptoError::ContextMismatch),
        }
    }

    /// Componentwise homomorphic addition.
    pub fn add(&self, a: &HeVector, b: &HeVector) -> Result<HeVector, CryptoError> {
        self.check(a)?;
        self.check(b)?;
        let data = match (&a.data, &b.data) {
            (HeData::Plain { coords: x, nonce: nx }, HeData::Plain { coords: y, nonce: ny }) => HeData::Plain {
                coords: x.iter().zip(y).map(|(p, q)| add_mod(*p, *q, self.modulus)).collect(),
                nonce: nx.wrapping_add(*ny),
            },
            (HeData::Pairs(x), HeData::Pairs(y)) => {
                let p = self.group.as_ref().expect("elgamal context without group").p;
                HeData::Pairs(x.iter().zip(y).map(|(s, t)| (mul_mod(s.0, t.0, p), mul_mod(s.1, t.1, p))).collect())
            }
            _ => return Err(CryptoError::ContextMismatch),
        };
        Ok(HeVector { ctx: self.id, width: a.width, data })
    }

    /// In-place `acc ⊕= b`.
    pub fn add_assign(&self, acc: &mut HeVector, b: &HeVector) -> Result<(), CryptoError> {
        self.check(acc)?;
        self.check(b)?;
        match (&mut acc.data, &b.data) {
            (HeData::Plain { coords: x, nonce: nx }, HeData::Plain { coords: y, nonce: ny }) => {
                for (p, q) in x.iter_mut().zip(y) {
                    *p = add_mod(*p, *q, self.modulus);
                }
                *nx = nx.wrapping_add(*ny);
            }
            (HeData::Pairs(x), HeData::Pairs(y)) => {
                let p = self.group.as_ref().expect("elgamal context without group").p;
                for (s, t) in x.iter_mut().zip(y) {
                    s.0 = mul_mod(s.0, t.0, p);
                    s.1 = mul_mod(s.1, t.1, p);
                }
            }
            _ => return Err(CryptoError::ContextMismatch),
        }
        Ok(())
    }

    /// Homomorphic negation: decrypts to `-a mod N`.
    pub fn neg(&self, a: &HeVector) -> Result<HeVector, CryptoError> {
        self.check(a)?;
        let data = match &a.data {
            HeData::Plain { coords, nonce } => HeData::Plain {
                coords: coords.iter().map(|c| (self.modulus - c) % self.modulus).collect(),
                nonce: nonce.wrapping_neg(),
            },
            HeData::Pairs(x) => {
                let p = self.group.as_ref().expect("elgamal context without group").p;
                HeData::Pairs(x.iter().map(|s| (inv_mod_prime(s.0, p), inv_mod_prime(s.1, p))).collect())
            }
        };
        Ok(HeVector { ctx: self.id, width: a.width, data })
    }

    pub fn sub(&self, a: &HeVector, b: &HeVector) -> Result<HeVector, CryptoError> {
        self.add(a, &self.neg(b)?)
    }

    /// Exact plaintext vector in [0, N)^K. Requires the secret key.
    pub fn decrypt(&self, v: &HeVector) -> Result<Vec<u64>, CryptoError> {
        let secret = self.secret.as_ref().ok_or(CryptoError::MissingSecretKey)?;
        self.check(v)?;
        match &v.data {
            HeData::Plain { coords, .. } => Ok(coords.clone()),
            HeData::Pairs(x) => {
                let g = self.group.as_ref().expect("elgamal context without group");
                let table = secret.table.get_or_init(|| Bsgs::build(g, self.modulus));
                x.iter()
                    .map(|&(c1, c2)| {
                        let s_inv = pow_mod(c1, self.modulus - secret.x, g.p);
                        let m = mul_mod(c2, s_inv, g.p);
                        table.log(m, g.p, self.modulus).ok_or(CryptoError::DecryptFailed)
                    })
                    .collect()
            }
        }
    }
}

fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

impl Bsgs {
    fn build(g: &Group, order: u64) -> Bsgs {
        let step = (order as f64).sqrt().ceil() as u64 + 1;
        let mut baby = HashMap::with_capacity(step as usize);
        let mut cur = 1u64;
        for j in 0..step {
            baby.entry(cur).or_insert(j);
            cur = mul_mod(cur, g.g, g.p);
        }
        let giant = pow_mod(g.g, (order - step % order) % order, g.p);
        Bsgs { step, baby, giant }
    }

    fn log(&self, target: u64, p: u64, order: u64) -> Option<u64> {
        let mut gamma = target;
        for i in 0..=self.step {
            if let Some(j) = self.baby.get(&gamma) {
                return Some((i * self.step + j) % order);
            }
            gamma = mul_mod(gamma, self.giant, p);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn ctxs() -> Vec<HeContext> {
        vec![
            HeContext::generate(HeBackend::Transparent, 1009, 4, 3).unwrap(),
            HeContext::generate(HeBackend::ExpElgamal, 1009, 4, 3).unwrap(),
        ]
    }

    #[test]
    fn unit_vectors_decrypt() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for ctx in ctxs() {
            assert_eq!(ctx.decrypt(&ctx.encrypt_unit(1, &mut rng).unwrap()).unwrap(), vec![1, 0, 0, 0]);
            assert_eq!(ctx.decrypt(&ctx.encrypt_unit(4, &mut rng).unwrap()).unwrap(), vec![0, 0, 0, 1]);
            assert!(matches!(ctx.encrypt_unit(5, &mut rng), Err(CryptoError::IndexOutOfRange { .. })));
            assert!(matches!(ctx.encrypt_unit(0, &mut rng), Err(CryptoError::IndexOutOfRange { .. })));
        }
    }

    #[test]
    fn encryptions_are_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for ctx in ctxs() {
            let a = ctx.encrypt_unit(2, &mut rng).unwrap();
            let b = ctx.encrypt_unit(2, &mut rng).unwrap();
            assert_ne!(a, b);
            assert_eq!(ctx.decrypt(&a).unwrap(), ctx.decrypt(&b).unwrap());
        }
    }

    #[test]
    fn sums_and_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ctx in ctxs() {
            let e1 = ctx.encrypt_unit(1, &mut rng).unwrap();
            let e2 = ctx.encrypt_unit(2, &mut rng).unwrap();
            assert_eq!(ctx.decrypt(&ctx.add(&e1, &e2).unwrap()).unwrap(), vec![1, 1, 0, 0]);
            let mut acc = ctx.zero();
            for _ in 0..37 {
                let e = ctx.encrypt_unit(1, &mut rng).unwrap();
                ctx.add_assign(&mut acc, &e).unwrap();
            }
            assert_eq!(ctx.decrypt(&acc).unwrap(), vec![37, 0, 0, 0]);
            let d = ctx.sub(&e2, &e1).unwrap();
            assert_eq!(ctx.decrypt(&d).unwrap(), vec![1008, 1, 0, 0]);
        }
    }

    #[test]
    fn context_mismatch_and_missing_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = HeContext::generate(HeBackend::Transparent, 1009, 4, 1).unwrap();
        let b = HeContext::generate(HeBackend::Transparent, 1009, 4, 2).unwrap();
        let va = a.encrypt_unit(1, &mut rng).unwrap();
        let vb = b.encrypt_unit(1, &mut rng).unwrap();
        assert!(matches!(a.add(&va, &vb), Err(CryptoError::ContextMismatch)));
        assert!(matches!(a.public().decrypt(&va), Err(CryptoError::MissingSecretKey)));
        assert_eq!(a.public().add(&va, &va).unwrap().context_id(), a.id());
    }

    #[test]
    fn elgamal_rejects_composite_modulus() {
        assert!(HeContext::generate(HeBackend::ExpElgamal, 1000, 2, 0).is_err());
    }
}
