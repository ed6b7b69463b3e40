//! Seed derivation: every stage of a run draws its RNG from the master seed
//! and a fixed label, so runs reproduce end to end.

use sha2::{Digest, Sha256};

/// Derive a stage seed from the master seed and a label.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}
