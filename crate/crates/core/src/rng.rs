//! Portable seeded randomness.
//!
//! Every random decision in the toolkit goes through [`Rng`], so streams can
//! be reproduced in any language:
//!
//! * generator: xoshiro256++, state filled from a `u64` seed by SplitMix64
//!   (the reference seeding of the xoshiro authors);
//! * substreams: `derive(seed, [t0, t1, ..])` folds each tag as
//!   `h = splitmix64_first_output(h ^ t)` starting from `h = seed`;
//! * `below(n)`: mask to the next power of two minus one, reject `>= n`;
//! * `unit()`: `(next_u64() >> 11) * 2^-53`;
//! * `shuffle`: Fisher-Yates from the back, `j = below(i + 1)`;
//! * `gaussian()`: Marsaglia polar method, one value per call (the second
//!   variate is discarded).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

/// Stream tags used by the toolkit; stable across releases.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const LABEL_ERROR: u64 = 3;
    pub const POOL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const CLIENTS: u64 = 7;
    pub const HOLDOUT: u64 = 8;
    pub const FRACTION: u64 = 9;
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
}

fn splitmix_first(x: u64) -> u64 {
    SplitMix64::seed_from_u64(x).next_u64()
}

/// Folds `tags` into `seed`; see the module docs for the exact recipe.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |h, &t| splitmix_first(h ^ t))
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn substream(seed: u64, tags: &[u64]) -> Self {
        Rng::new(derive(seed, tags))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mask = n.next_power_of_two().wrapping_sub(1);
        let mask = if mask == 0 { 0 } else { mask };
        loop {
            let x = self.next_u64() & mask;
            if x < n {
                return x;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// A random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// `k` distinct values from `0..n`, in draw order (partial Fisher-Yates
    /// from the front: position `i` swaps with `i + below(n - i)`).
    pub fn sample(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below_usize(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// Standard normal variate.
    pub fn gaussian(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.unit() - 1.0;
            let v = 2.0 * self.unit() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_differ_by_tag() {
        assert_ne!(derive(1, &[tags::NOISE, 0]), derive(1, &[tags::NOISE, 1]));
        assert_ne!(derive(1, &[tags::NOISE]), derive(1, &[tags::SPLIT]));
        assert_eq!(derive(9, &[]), 9);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Rng::new(3);
        for n in [1u64, 2, 3, 7, 10, 1000] {
            for _ in 0..200 {
                assert!(r.below(n) < n);
            }
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = Rng::new(11);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn sample_is_distinct() {
        let mut r = Rng::new(5);
        let mut s = r.sample(100, 40);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 40);
    }

    #[test]
    fn gaussian_moments() {
        let mut r = Rng::new(42);
        let n = 20000;
        let xs: Vec<f64> = (0..n).map(|_| r.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }
}
