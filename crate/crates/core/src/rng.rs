//! Seeded random streams.
//!
//! Every stochastic component draws from its own xoshiro256** generator.
//! Generators are seeded through `seed_from_u64`, which expands the 64-bit
//! seed with SplitMix64. Independent child streams are derived from a parent
//! seed and a stream label with the SplitMix64 finalizer, so two components
//! never share a stream and adding a component does not shift the others.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

/// The generator used everywhere in the crate.
pub type Rng = Xoshiro256StarStar;

/// Well-known stream labels.
pub mod stream {
    pub const ENV_AGENT: u64 = 1;
    pub const ENV_SERVER: u64 = 2;
    pub const ENV_EVAL: u64 = 3;
    pub const NET_INIT: u64 = 4;
    pub const EXPLORATION: u64 = 5;
    pub const REPLAY: u64 = 6;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of a child stream.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Uniform draw on `[low, high)` using 53 random mantissa bits.
pub fn uniform(rng: &mut Rng, low: f64, high: f64) -> f64 {
    use rand::Rng as _;
    low + (high - low) * rng.gen::<f64>()
}
