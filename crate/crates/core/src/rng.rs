//! Seed plumbing. Every random decision in the crate goes through a
//! ChaCha8 stream derived from a user seed plus a purpose tag, so results are
//! identical across platforms and independent of call order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn hash_words(words: &[u64]) -> u64 {
    words.iter().fold(0x5EED_u64, |acc, &w| mix64(acc ^ mix64(w)))
}

pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let tag_hash = tag.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01B3)
    });
    ChaCha8Rng::seed_from_u64(hash_words(&[seed, tag_hash, index]))
}
