//! Reproducible random streams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by `(seed, stream)`,
//! and positions within a stream are addressable so that work can be split
//! across threads without changing any drawn value.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::normal::inverse_normal_cdf;

#[derive(Debug, Clone)]
pub struct CounterRng {
    inner: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        CounterRng { inner }
    }

    /// Generator positioned at the start of block `index`, where each block
    /// holds `words_per_block` 64-bit draws.
    pub fn at_block(seed: u64, stream: u64, index: u64, words_per_block: u64) -> Self {
        let mut rng = Self::new(seed, stream);
        // Word position counts 32-bit words.
        rng.inner
            .set_word_pos(u128::from(index) * u128::from(words_per_block) * 2);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)` on the 2^-53 grid.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from the open interval `(0, 1)`, grid midpoints.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.open_uniform()).expect("open uniform is inside (0, 1)")
    }
}
