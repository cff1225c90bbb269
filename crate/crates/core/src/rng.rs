//! Named, seed-derived random streams.
//!
//! Every consumer of randomness (weight init, phantoms, masks, epoch shuffles)
//! draws from its own stream so that adding draws in one place never shifts
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a 64-bit seed from a base seed and a list of labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream(base: u64, labels: &[&str]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, labels))
}
