//! Monte Carlo aggregation.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compensated summation; the result does not depend on thread scheduling
/// because callers sum ordered vectors.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn mean(values: &[f64]) -> f64 {
    kahan_sum(values.iter().copied()) / values.len() as f64
}

/// Scalar Monte Carlo result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// A deterministic value; `n = 0` marks it as not sampled.
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, stderr: 0.0, n: 0 }
    }

    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientSamples(format!("{n} samples; at least 2 are required")));
        }
        let first = samples[0];
        if samples.iter().all(|&v| v == first) {
            return Ok(Estimate { mean: first, stderr: 0.0, n });
        }
        let m = mean(samples);
        let var = kahan_sum(samples.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64;
        Ok(Estimate { mean: m, stderr: (var / n as f64).sqrt(), n })
    }

    /// Standard error from `n_batches` contiguous batch means.
    pub fn from_batches(samples: &[f64], n_batches: usize) -> Result<Self> {
        let n = samples.len();
        if n_batches < 2 || n < n_batches {
            return Err(Error::InsufficientSamples(format!("{n} samples for {n_batches} batches")));
        }
        let size = n / n_batches;
        let means: Vec<f64> = samples.chunks_exact(size).take(n_batches).map(mean).collect();
        let b = Estimate::from_samples(&means)?;
        Ok(Estimate { mean: mean(samples), stderr: b.stderr, n })
    }

    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }

    /// `|mean - target| <= k * stderr` (with a round-off allowance).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }

    pub fn map_linear(&self, a: f64, b: f64) -> Estimate {
        Estimate { mean: a * self.mean + b, stderr: a.abs() * self.stderr, n: self.n }
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            mean: self.mean - other.mean,
            stderr: self.stderr.hypot(other.stderr),
            n: self.n.min(other.n),
        }
    }
}

/// Vector-valued Monte Carlo result (component-wise errors).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl VectorEstimate {
    pub fn from_samples(samples: &[DVector<f64>]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientSamples(format!("{n} samples; at least 2 are required")));
        }
        let d = samples[0].len();
        let mut mean = Vec::with_capacity(d);
        let mut stderr = Vec::with_capacity(d);
        for i in 0..d {
            let col: Vec<f64> = samples.iter().map(|v| v[i]).collect();
            let e = Estimate::from_samples(&col)?;
            mean.push(e.mean);
            stderr.push(e.stderr);
        }
        Ok(VectorEstimate { mean, stderr, n })
    }

    pub fn component(&self, i: usize) -> Estimate {
        Estimate { mean: self.mean[i], stderr: self.stderr[i], n: self.n }
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Every component within `k` stderr of `target`.
    pub fn within(&self, target: &[f64], k: f64) -> bool {
        (0..self.dim()).all(|i| self.component(i).within(target[i], k))
    }

    /// Euclidean norm of the mean with a delta-method error.
    pub fn norm(&self) -> Estimate {
        let m = self.mean_vector();
        let len = m.norm();
        let stderr = if len > 0.0 {
            (self.mean.iter().zip(&self.stderr).map(|(a, s)| (a * s).powi(2)).sum::<f64>()).sqrt() / len
        } else {
            self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
        };
        Estimate { mean: len, stderr, n: self.n }
    }
}

/// Path count, time step and master seed of a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub step: f64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_paths: usize, step: f64, seed: u64) -> Self {
        McConfig { n_paths, step, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InsufficientSamples(format!("n_paths = {}", self.n_paths)));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        McConfig { seed, ..self }
    }

    pub fn with_paths(self, n_paths: usize) -> Self {
        McConfig { n_paths, ..self }
    }
}

/// Runs `f(i)` for `i in 0..n` on the rayon pool and returns results in index order.
pub fn par_collect<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

fn mean_pair_distance(a: &[&DVector<f64>], b: &[&DVector<f64>]) -> f64 {
    let s = kahan_sum(a.iter().flat_map(|x| b.iter().map(move |y| (*x - *y).norm())));
    s / (a.len() * b.len()) as f64
}

/// Szekely's energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|` (V-statistic).
pub fn energy_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let ra: Vec<_> = a.iter().collect();
    let rb: Vec<_> = b.iter().collect();
    2.0 * mean_pair_distance(&ra, &rb) - mean_pair_distance(&ra, &ra) - mean_pair_distance(&rb, &rb)
}

/// Two-sample permutation test on the energy distance; returns `(statistic, p-value)`.
pub fn energy_test(a: &[DVector<f64>], b: &[DVector<f64>], permutations: usize, seed: u64) -> (f64, f64) {
    let pooled: Vec<DVector<f64>> = a.iter().chain(b).cloned().collect();
    let n = pooled.len();
    let na = a.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (&pooled[i] - &pooled[j]).norm();
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let dist = &dist;
    let avg = |p: &[usize], q: &[usize]| {
        kahan_sum(p.iter().flat_map(|&i| q.iter().map(move |&j| dist[i * n + j]))) / (p.len() * q.len()) as f64
    };
    let stat = |idx: &[usize]| {
        let (ia, ib) = idx.split_at(na);
        2.0 * avg(ia, ib) - avg(ia, ia) - avg(ib, ib)
    };
    let mut idx: Vec<usize> = (0..n).collect();
    let observed = stat(&idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        idx.shuffle(&mut rng);
        if stat(&idx) >= observed - 1e-15 {
            exceed += 1;
        }
    }
    (observed, (exceed + 1) as f64 / (permutations + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn constant_samples_have_zero_stderr() {
        let e = Estimate::from_samples(&[3.5; 10]).unwrap();
        assert_eq!(e, Estimate { mean: 3.5, stderr: 0.0, n: 10 });
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(matches!(Estimate::from_samples(&[1.0]), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn stderr_is_sample_sd_over_root_n() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.stderr - sd / 2.0).abs() < 1e-15);
        let (lo, hi) = e.ci95();
        assert!((hi - lo - 2.0 * 1.96 * e.stderr).abs() < 1e-15);
    }

    #[test]
    fn kahan_beats_naive_summation() {
        let v: Vec<f64> = std::iter::once(1e16).chain(std::iter::repeat_n(1.0, 1000)).collect();
        assert_eq!(kahan_sum(v.iter().copied()), 1e16 + 1000.0);
    }

    #[test]
    fn energy_test_separates_shifted_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mk = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<DVector<f64>> {
            (0..150).map(|_| DVector::from_fn(2, |_, _| rng.gen::<f64>() + shift)).collect()
        };
        let a = mk(&mut rng, 0.0);
        let b = mk(&mut rng, 0.0);
        let c = mk(&mut rng, 0.4);
        assert!(energy_test(&a, &b, 199, 5).1 > 0.01);
        assert!(energy_test(&a, &c, 199, 5).1 < 0.01);
        assert!(energy_distance(&a, &a).abs() < 1e-12);
    }

    #[test]
    fn par_collect_preserves_order() {
        let v = par_collect(100, |i| Ok(i * 2)).unwrap();
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<u64>>());
    }

    proptest! {
        #[test]
        fn batch_means_mean_matches_plain_mean(v in proptest::collection::vec(-5.0f64..5.0, 40..200)) {
            let a = Estimate::from_samples(&v).unwrap();
            let b = Estimate::from_batches(&v, 10).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!(a.stderr >= 0.0 && b.stderr >= 0.0);
        }
    }
}
