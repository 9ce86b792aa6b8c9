//! Named sub-seeds.
//!
//! Every random stream in the toolkit is derived from one master seed and a
//! purpose string, so that adding a new consumer never shifts the draws of an
//! existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derive a 64-bit seed from `(seed, purpose)`.
pub fn subseed(seed: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Sub-seed for an indexed stream, e.g. one per bootstrap resample.
pub fn indexed_subseed(seed: u64, purpose: &str, index: u64) -> u64 {
    subseed(subseed(seed, purpose), &index.to_string())
}

pub fn rng_for(seed: u64, purpose: &str) -> Rng {
    Rng::seed_from_u64(subseed(seed, purpose))
}

pub fn indexed_rng(seed: u64, purpose: &str, index: u64) -> Rng {
    Rng::seed_from_u64(indexed_subseed(seed, purpose, index))
}

/// Hex SHA-256 of arbitrary bytes; used for config hashes in manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
