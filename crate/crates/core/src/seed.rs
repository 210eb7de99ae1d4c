//! Deterministic derivation of sub-stream seeds.
//!
//! Every stochastic routine in this crate takes an explicit integer seed.
//! Nested randomness (optimizer restarts, per-trial draws) derives its own
//! seed from the parent seed plus a textual tag, so results never depend on
//! call order, thread count or the standard library's unstable hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `base` and an ordered list of tags.
///
/// The same `(base, tags)` pair always yields the same seed, on every
/// platform and release. Distinct tag lists yield independent streams for
/// all practical purposes.
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for tag in tags {
        hasher.update([0u8]);
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Builds the generator used throughout the crate from a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
