//! Seedable, splittable random streams.
//!
//! Streams are ChaCha8 keystreams: the seed fixes the key and the stream id
//! selects an independent 2^64-block sequence, so `split` children never
//! overlap with their parent or each other. Uniform variates are built from
//! the top 53 bits of each 64-bit word, which keeps sample sequences
//! bit-reproducible across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Child stream with the same seed and a stream id derived from
    /// `(self.stream, index)`. Does not advance `self`.
    pub fn split(&self, index: u64) -> Self {
        let id = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Inverse-CDF draw from unnormalized nonnegative `weights`, scanning
    /// the running sum in order.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform();
        categorical_linear(weights, u)
    }
}

/// Index `i` of the first running sum `w_0 + ... + w_i` that exceeds `u`,
/// with `u` in [0, 1). Falls back to the last positive entry when rounding
/// leaves the total just below `u`.
pub fn categorical_linear(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive(weights)
}

/// Same rule as [`categorical_linear`] over a precomputed running sum.
pub fn categorical_cdf(cdf: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    if i < cdf.len() {
        return i;
    }
    // total < u through rounding: take the last entry that carries mass
    let mut j = cdf.len() - 1;
    while j > 0 && cdf[j] == cdf[j - 1] {
        j -= 1;
    }
    j
}

/// Running sum accumulated in index order, matching [`categorical_linear`].
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|&w| {
            acc += w;
            acc
        })
        .collect()
}

fn last_positive(weights: &[f64]) -> usize {
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len().saturating_sub(1))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RandomStream::new(7);
        let mut b = RandomStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_streams_differ_from_parent() {
        let parent = RandomStream::new(3);
        let mut c0 = parent.split(0);
        let mut c1 = parent.split(1);
        let mut p = parent.clone();
        let x: Vec<u64> = (0..4).map(|_| c0.next_u64()).collect();
        let y: Vec<u64> = (0..4).map(|_| c1.next_u64()).collect();
        let z: Vec<u64> = (0..4).map(|_| p.next_u64()).collect();
        assert_ne!(x, y);
        assert_ne!(x, z);
        // splitting is a pure function of (seed, stream, index)
        let mut again = RandomStream::new(3).split(0);
        assert_eq!(x, (0..4).map(|_| again.next_u64()).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RandomStream::new(0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn categorical_skips_zero_mass() {
        let w = [0.0, 0.5, 0.0, 0.5];
        assert_eq!(categorical_linear(&w, 0.0), 1);
        assert_eq!(categorical_linear(&w, 0.49), 1);
        assert_eq!(categorical_linear(&w, 0.5), 3);
        let cdf = cumulative(&w);
        for u in [0.0, 0.2, 0.5, 0.7, 0.999_999] {
            assert_eq!(categorical_cdf(&cdf, u), categorical_linear(&w, u));
        }
    }

    #[test]
    fn rounding_shortfall_picks_last_positive() {
        let w = [0.3, 0.3, 0.3, 0.0];
        assert_eq!(categorical_linear(&w, 0.95), 2);
        assert_eq!(categorical_cdf(&cumulative(&w), 0.95), 2);
    }
}
