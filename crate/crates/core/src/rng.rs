//! Deterministic, independently seeded random streams.
//!
//! Every consumer derives its own ChaCha stream from the run seed and a
//! textual tag, so results do not depend on evaluation order or thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, tag: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// A derived 64-bit seed, for handing to APIs that take a plain seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    use rand::RngCore;
    stream(seed, tag).next_u64()
}
