//! Deterministic randomness: one master seed, purpose-tagged derived streams.
//!
//! Every random decision in the pipeline draws from a [`ChaCha8Rng`] seeded
//! either directly or through [`derive_seed`], so a single `u64` seed pins
//! the entire run bit-for-bit regardless of platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Build an RNG from a raw seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent seed from a master seed, a purpose tag and an index.
///
/// Hashing (rather than offsetting) keeps streams statistically independent
/// even for adjacent indices and unrelated tags.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Convenience: derived RNG in one call.
pub fn derived_rng(master: u64, tag: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a = derive_seed(7, "synth-sample", 0);
        let b = derive_seed(7, "synth-sample", 1);
        let c = derive_seed(7, "augment", 0);
        assert_eq!(a, derive_seed(7, "synth-sample", 0));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut r1 = rng_from_seed(42);
        let mut r2 = rng_from_seed(42);
        for _ in 0..100 {
            assert_eq!(r1.gen::<u64>(), r2.gen::<u64>());
        }
    }
}
