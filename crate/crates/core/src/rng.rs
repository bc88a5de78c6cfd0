//! Counter-based normal streams.
//!
//! Each path owns a ChaCha8 stream selected by `(seed, path)`. Every call to
//! [`NoiseStream::normal_pair`] consumes exactly two 64-bit words, so draw
//! `k` of a path sits at a fixed position in its stream and can be reached
//! directly with [`NoiseStream::seek`]. Results never depend on how paths are
//! scheduled across threads.

use rand::RngCore;
use rand_distr::{Distribution, Gamma};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

/// Uniform on the open interval `(0, 1)` from the top 53 bits.
#[inline]
fn open01(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        NoiseStream { rng }
    }

    /// Jump to draw index `k` (each draw is one normal pair).
    pub fn seek(&mut self, k: u64) {
        self.rng.set_word_pos(4 * k as u128);
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        open01(self.rng.next_u64())
    }

    /// Two independent standard normals by Box–Muller.
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = open01(self.rng.next_u64());
        let u2 = open01(self.rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Gamma variate with unit scale. Consumes a variable number of words.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(&mut self.rng)
    }
}
