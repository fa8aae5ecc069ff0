//! Seed derivation.
//!
//! Child seeds are derived from a parent seed and a path of counters by
//! folding each counter through SplitMix64:
//!
//! ```text
//! derive(s, [a, b]) = mix(mix(s ^ mix(a)) ^ mix(b))   (roughly)
//! ```
//!
//! so `(master, cell, set)` always names the same stream regardless of how
//! many other cells run or in which order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}
