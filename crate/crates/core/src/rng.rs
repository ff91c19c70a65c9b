//! Deterministic labeled RNG streams.
//!
//! Every source of randomness in a run is a ChaCha8 stream derived from the
//! master seed and a textual label ("env/3", "shuffle", "scheduler", ...).
//! Streams are independent by construction and stable across platforms, so
//! a (config, seed) pair always replays bit-identically no matter how the
//! work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent RNG stream from (master seed, label).
pub fn stream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Derive a 64-bit sub-seed, for handing to components that seed themselves.
pub fn sub_seed(master_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
