//! Seedable, splittable scene RNG.
//!
//! ChaCha8 keyed from a 64-bit seed. Floats are derived from the top 53 bits of
//! each `u64` so the stream is reproducible from any language with a ChaCha8
//! implementation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier written into every exported demonstration.
pub const RNG_ALGORITHM_ID: &str = "chacha8-u64seed-f53-v1";

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRng {
    inner: ChaCha8Rng,
    seed: u64,
}

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream with the same key on a different ChaCha stream id.
    /// Stream 0 is the parent's own stream.
    pub fn split(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream + 1);
        Self { inner, seed: self.seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Stateless 64-bit mixer (SplitMix64 finalizer) used to derive seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
