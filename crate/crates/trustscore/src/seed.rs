//! Stable seed derivation.
//!
//! Per-question and per-attempt seeds are hashed from the global seed so
//! results are independent of execution order and identical across runs
//! and platforms.

use sha2::{Digest, Sha256};

/// Derives a child seed from a global seed and any number of byte parts.
pub fn derive_seed(global: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Seed for everything question-scoped (candidate sampling, distractor draw).
pub fn question_seed(global: u64, question_id: &str) -> u64 {
    derive_seed(global, &[question_id.as_bytes()])
}

/// Seed for the per-attempt option shuffle.
pub fn attempt_seed(global: u64, question_id: &str, attempt_index: usize) -> u64 {
    derive_seed(
        global,
        &[question_id.as_bytes(), &(attempt_index as u64).to_le_bytes()],
    )
}
