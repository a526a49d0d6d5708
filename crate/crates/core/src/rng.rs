//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, index)` instead of being pulled
//! from a shared sequential generator. ChaCha is a counter-mode cipher, so a
//! generator can be positioned at any block in O(1): replications and records
//! can then be produced in any order, on any number of threads, with identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of 32-bit words reserved for each index within a stream (16 `u64`
/// draws). Callers must not take more than [`DRAWS_PER_INDEX`] `u64`/`f64`
/// values from a positioned generator or they spill into the next index.
const WORDS_PER_INDEX: u128 = 32;

/// Maximum 64-bit draws available at one `(stream, index)` address.
pub const DRAWS_PER_INDEX: usize = 16;

#[derive(Debug, Clone)]
pub struct CounterRng {
    base: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator positioned at `(stream, index)`.
    pub fn at(&self, stream: u64, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_INDEX);
        rng
    }

    /// Generator for long sequential use within a single stream.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        self.at(stream, 0)
    }
}
