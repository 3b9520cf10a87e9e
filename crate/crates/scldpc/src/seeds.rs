//! Deterministic derivation of per-task RNG seeds.
//!
//! Every stochastic routine in this crate draws its randomness from a
//! stream seeded by a stable mix of (user seed, coordinate indices), so
//! results are reproducible and independent of scheduling or worker count.

/// SplitMix64 finalizer; bijective on `u64` with good avalanche behavior.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a base seed with up to two coordinates (e.g. grid index and trial
/// index) into an independent stream seed.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}
