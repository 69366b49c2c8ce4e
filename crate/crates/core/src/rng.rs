//! Seeded, stream-splittable randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 keystream keyed by the
//! user seed. Independent consumers select disjoint 64-bit stream ids built
//! from a [`Domain`] tag and an index, so adding draws in one place never
//! shifts the numbers seen elsewhere. ChaCha is counter-based and its output
//! does not depend on platform or thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Purpose tag occupying the high 16 bits of a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Domain {
    /// Per-iteration training noise in the search loop.
    SearchBatch = 1,
    /// Held-out evaluation noise for benchmarks and acceptance runs.
    Evaluation = 2,
    /// Perturbation-field construction.
    Perturbation = 3,
    /// Monte-Carlo oracles.
    MonteCarlo = 4,
    /// Random schedules and other test fixtures.
    Fixture = 5,
}

/// Root of all randomness derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for `(domain, index)`. `index` must fit in 48 bits.
    pub fn stream(&self, domain: Domain, index: u64) -> ChaCha8Rng {
        assert!(index < (1 << 48), "stream index out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((domain as u64) << 48) | index);
        rng
    }
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `count` standard-normal vectors of dimension `dim`, drawn row by row.
pub fn normal_batch<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| normal(rng)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_numbers() {
        let s = SeedStream::new(7);
        let a = normal_batch(&mut s.stream(Domain::SearchBatch, 3), 4, 2);
        let b = normal_batch(&mut s.stream(Domain::SearchBatch, 3), 4, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_disjoint() {
        let s = SeedStream::new(7);
        let a: u64 = s.stream(Domain::SearchBatch, 0).random();
        let b: u64 = s.stream(Domain::SearchBatch, 1).random();
        let c: u64 = s.stream(Domain::Evaluation, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn known_first_draw_is_stable() {
        // pins the generator so a dependency bump that changes streams is caught
        let x: u64 = SeedStream::new(0).stream(Domain::Fixture, 0).random();
        let again: u64 = SeedStream::new(0).stream(Domain::Fixture, 0).random();
        assert_eq!(x, again);
        assert_eq!(x, 9_778_089_598_021_947_962);
    }
}
