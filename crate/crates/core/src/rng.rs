//! Seeded, platform-stable randomness.
//!
//! Every stochastic operation takes an explicit `u64` seed and derives a
//! ChaCha8 stream from it. ChaCha output is specified bit-for-bit, so runs
//! reproduce across platforms. Independent consumers of the same seed pick
//! distinct stream ids so their draws never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the different consumers of a seed.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const FEATURES: u64 = 2;
    pub const SPLITS: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const EDGERAND: u64 = 7;
    pub const LAPGRAPH: u64 = 8;
    pub const RANDOM_ATTACK: u64 = 9;
}

pub fn seeded(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Mixes a seed with a tag into an unrelated seed (SplitMix64 finalizer).
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Laplace(0, scale) by inverse CDF.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u in (-1/2, 1/2)
    let u = open_unit(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
