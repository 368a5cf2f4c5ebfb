//! Seed streams, sample executors and one-pass statistics.
//!
//! Every Monte Carlo sample `i` draws its realization from
//! `sample_seed(root_seed, i)`; results are folded in index order, so the
//! output does not depend on how samples were scheduled.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-sample seed: the SplitMix64 finalizer applied to
/// `root + 0x9E3779B97F4A7C15 * (index + 1)` (wrapping).
///
/// Fixed forever; changing it changes every stored result.
pub fn sample_seed(root_seed: u64, index: u64) -> u64 {
    let mut z = root_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Side stream for per-sample randomness other than the couplings (random
/// initial directions or angles). Stream 2 of the sample's keystream, so it
/// never overlaps the coupling draws.
pub fn auxiliary_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Uniform draw on `[0, 1)`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    crate::model::unit_f64(rng)
}

/// Runs `f(0), ..., f(n - 1)` and returns the results in index order.
pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Welford's running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Monte Carlo summary with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub root_seed: u64,
    /// Samples discarded (near-eigenvalue Green's functions); not in `n_samples`.
    pub rejections: u64,
    pub metadata: BTreeMap<String, f64>,
}

impl EstimatorResult {
    pub fn from_stats(stats: &RunningStats, root_seed: u64) -> Self {
        EstimatorResult {
            mean: stats.mean(),
            std_error: stats.std_error(),
            n_samples: stats.count(),
            root_seed,
            rejections: 0,
            metadata: BTreeMap::new(),
        }
    }

    /// Folds `samples` in order.
    pub fn from_samples(samples: &[f64], root_seed: u64) -> Self {
        let mut s = RunningStats::default();
        samples.iter().for_each(|&x| s.push(x));
        Self::from_stats(&s, root_seed)
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.metadata.insert(key.into(), value);
        self
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_distance(&self, other: f64) -> f64 {
        let d = (self.mean - other).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub(crate) fn check_samples(n_samples: u64) -> crate::Result<()> {
    if n_samples < 2 {
        return Err(crate::Error::param("n_samples", "at least two samples are required"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..1000).map(|i| sample_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 1000);
        assert_ne!(sample_seed(42, 0), sample_seed(43, 0));
        // frozen: the seed stream is part of the stored-result contract
        assert_eq!(sample_seed(0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.3 + 1e6).collect();
        let mut s = RunningStats::default();
        xs.iter().for_each(|&x| s.push(x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((s.mean() - mean).abs() < 1e-9);
        assert!((s.variance() - var).abs() < 1e-8 * var);
        assert!((s.std_error() - (var / 101.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn estimator_from_samples() {
        let r = EstimatorResult::from_samples(&[1.0, 2.0, 3.0], 9).with_meta("n", 3.0);
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.n_samples, 3);
        assert!((r.std_error - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(r.metadata["n"], 3.0);
        assert!((r.z_distance(3.0) - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sequential_preserves_order() {
        assert_eq!(Sequential.map_indexed(4, |i| i * i), alloc::vec![0, 1, 4, 9]);
    }
}
