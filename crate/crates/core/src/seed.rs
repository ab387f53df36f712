//! Child-seed derivation.
//!
//! Every stochastic sub-step (a restart, a trial, one tail of a two-sided
//! strategy) receives its own seed computed as the first eight bytes
//! (little-endian) of `SHA-256(parent_seed_le || role)`. Sub-results can
//! therefore be reproduced in isolation from the parent seed and the role
//! string alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `parent` and a role label such as `"right"`
/// or `"restart/3"`.
pub fn derive_seed(parent: u64, role: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(role.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
