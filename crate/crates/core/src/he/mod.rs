//! Somewhat homomorphic encryption over the integers.
//!
//! A bit `m` is encrypted as `c = m' + p*q`, where `p` is the secret odd
//! modulus, `q` a large random multiplier and `m'` a small noise term with the
//! parity of `m`. Adding ciphertexts XORs the bits and multiplying them ANDs
//! the bits, as long as the accumulated noise stays below `p/2`. Ciphertexts
//! can be post-processed with a public squash vector so that decryption
//! becomes a shallow circuit, which [`recrypt`] evaluates homomorphically to
//! refresh a noisy ciphertext.

mod ciphertext;
pub mod codec;
pub mod keyfile;
mod keys;
mod params;
mod recrypt;
mod squash;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use ciphertext::{add, mul, Ciphertext};
pub use keys::{keygen, BitEncryptor, BootstrapKey, PublicKey, SecretKey, SquashHint};
pub use params::{SecurityParams, MAX_LAMBDA};
pub use recrypt::{recrypt, recrypt_noise_bits};
pub use squash::{squash_postprocess, z_value_bytes};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("noise overflow: estimate of {noise_bits} bits reaches the limit of {limit}")]
    NoiseOverflow { noise_bits: u64, limit: u64 },
    #[error("bootstrapping requested but no bootstrap key is loaded")]
    BootstrapUnavailable,
    #[error("ciphertext has no squash vector")]
    SquashMissing,
    #[error("ciphertext of {c_bits} bits exceeds the squash precision of {capacity} bits")]
    SquashPrecision { c_bits: u64, capacity: u64 },
    #[error("key file: {0}")]
    KeyFile(String),
}

/// Deterministic generator for a fixed seed, OS entropy otherwise.
pub fn rng_from_seed(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
