//! Seed derivation.
//!
//! Every random stream in the crate is obtained from a 64-bit master seed, a purpose
//! label and an index. Streams for different `(purpose, index)` pairs are independent,
//! so loops over replications can run in any order and still produce identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives a child seed from `(master, purpose, index)`.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// A ChaCha stream keyed by `(master, purpose, index)`.
pub fn stream(master: u64, purpose: &str, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut hasher = Sha256::new();
    hasher.update(b"stream");
    hasher.update(master.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    key.copy_from_slice(&hasher.finalize());
    ChaCha8Rng::from_seed(key)
}
