//! Seed derivation and RNG stream layout.
//!
//! Every random draw in this crate comes from a [`ChaCha8Rng`], which is
//! portable and bit-reproducible across platforms. A 64-bit seed selects the
//! key; the ChaCha stream id separates independent purposes that share a seed
//! (instance generation, initial tables, transition sampling), so adding draws
//! to one purpose never perturbs another.
//!
//! Replicas of an experiment get their own seed through [`derive_seed`], a
//! SplitMix64 finalizer applied to `base + golden * (index + 1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used by [`crate::mdp::random_mdp`].
pub const STREAM_GENERATOR: u64 = 0;
/// Stream used for sampling `(s, a)` and `s'` inside a learning run.
pub const STREAM_SAMPLING: u64 = 1;
/// Stream used for randomly drawn initial tables.
pub const STREAM_INIT: u64 = 2;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under base seed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// A ChaCha8 generator keyed by `seed` and positioned on `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
