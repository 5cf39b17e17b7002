//! Signatures and the homomorphic set-tag encryption.

mod he;
pub mod prime;
mod sig;

pub use he::{HeBackend, HeContext, HeData, HeVector};
pub use sig::{keygen_signatures, signature_len, Keyring, SigBackend, Signature, SignatureKeyPair, SigningKey, VerifyingKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("set index {index} outside 1..={k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("ciphertexts belong to different contexts")]
    ContextMismatch,
    #[error("decryption requires the secret key")]
    MissingSecretKey,
    #[error("unusable modulus {0}")]
    BadModulus(u64),
    #[error("vector length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("plaintext outside the decryptable range")]
    DecryptFailed,
}

/// Smallest prime exceeding `3·n·D·16`.
pub fn default_modulus(n: u64, d: u64) -> u64 {
    let base = 3u64
        .checked_mul(n)
        .and_then(|x| x.checked_mul(d))
        .and_then(|x| x.checked_mul(16))
        .expect("modulus overflow");
    prime::next_prime_above(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_modulus_values() {
        // 3*4*8*16 = 1536; next prime above is 1543.
        assert_eq!(default_modulus(4, 8), 1543);
        assert!(default_modulus(4, 1024) > 3 * 4 * 1024);
    }
}
