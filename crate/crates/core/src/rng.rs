//! Seeded random streams.
//!
//! Every stochastic stage draws from a ChaCha8 stream (a counter-based
//! generator: the keystream block index is the counter, so a stream is fully
//! determined by its 64-bit seed). Stage streams are derived from a master
//! seed by XOR-ing a 64-bit FNV-1a hash of a stage tag, which keeps stages
//! independently reproducible: changing the epoch budget of training does not
//! shift the numbers drawn by data generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash of a tag string.
pub fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seed for a named stage: `master ^ fnv1a(tag)`.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    master ^ tag_hash(tag)
}

/// Deterministic random stream used throughout the crate.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn for_stage(master: u64, tag: &str) -> Self {
        Self::new(derive_seed(master, tag))
    }

    /// Child stream for a sub-task (cell, class, batch).
    pub fn fork(&mut self, tag: &str) -> Self {
        let base: u64 = self.inner.random();
        Self::new(derive_seed(base, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
