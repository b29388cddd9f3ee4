//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a master seed and a stream tag, so results never depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t)))
}

/// Generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable tags for the different consumers of a master seed.
pub mod tags {
    pub const SIMULATE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const RANDOM_STITCH: u64 = 4;
    pub const NRI_INIT: u64 = 5;
    pub const NRI_BATCH: u64 = 6;
    pub const NRI_NOISE: u64 = 7;
    pub const NULL_MODEL: u64 = 8;
    pub const PIPELINE_SEED: u64 = 9;
    pub const RECON_RANDOM: u64 = 10;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(9, 1).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream(9, 1).random()).collect();
        assert_eq!(a, b);
        let x: u64 = stream(9, 1).random();
        let y: u64 = stream(9, 2).random();
        assert_ne!(x, y);
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    }
}
