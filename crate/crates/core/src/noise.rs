//! Deterministic random substreams.
//!
//! A stream is addressed by `(master_seed, tag, path_index)`: the tag picks a
//! ChaCha key, the path index picks the ChaCha stream under that key. Draws for
//! one path never depend on how many other paths exist or which thread ran them.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Driving Brownian increments of the first (or only) diffusion.
pub const TAG_BROWNIAN: &str = "brownian";
/// Independent increments `dB'` used by couplings.
pub const TAG_INDEPENDENT: &str = "independent";
/// Uniforms for Brownian-bridge crossing tests.
pub const TAG_BRIDGE: &str = "bridge";

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

fn key(master_seed: u64, tag: &str) -> [u8; 32] {
    let mut state = master_seed ^ fnv1a(tag.as_bytes()).rotate_left(17);
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub path_index: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        NoiseStream { master_seed, path_index }
    }

    pub fn rng(&self, tag: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(key(self.master_seed, tag));
        rng.set_stream(self.path_index);
        rng
    }

    pub fn brownian(&self) -> Gaussian {
        Gaussian(self.rng(TAG_BROWNIAN))
    }

    /// A fresh family of streams owned by this path (used for nested simulations).
    pub fn child(&self, tag: &str, index: u64) -> NoiseStream {
        let mut state = self.master_seed ^ fnv1a(tag.as_bytes());
        state ^= splitmix64(&mut self.path_index.clone());
        NoiseStream { master_seed: splitmix64(&mut state), path_index: index }
    }
}

/// Seed for a named sub-task, derived from the master seed.
pub fn derive_seed(master_seed: u64, task: &str) -> u64 {
    let mut state = master_seed ^ fnv1a(task.as_bytes()).rotate_left(29);
    splitmix64(&mut state)
}

/// Source of `N(0, h I_d)` increments.
pub struct Gaussian(pub ChaCha8Rng);

impl Gaussian {
    pub fn increment(&mut self, d: usize, h: f64) -> DVector<f64> {
        let sd = h.sqrt();
        DVector::from_fn(d, |_, _| sd * self.0.sample::<f64, _>(StandardNormal))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }
}

/// Sums of `factor` consecutive increments: the same Brownian path on a coarser grid.
pub fn coarsen(increments: &[DVector<f64>], factor: usize) -> Vec<DVector<f64>> {
    assert!(factor >= 1 && increments.len().is_multiple_of(factor));
    increments.chunks(factor).map(|c| c.iter().fold(DVector::zeros(c[0].len()), |acc, v| acc + v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = NoiseStream::new(7, 3).brownian().increment(4, 1.0);
        let b = NoiseStream::new(7, 3).brownian().increment(4, 1.0);
        let c = NoiseStream::new(7, 4).brownian().increment(4, 1.0);
        let d = NoiseStream::new(8, 3).brownian().increment(4, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        let e = Gaussian(NoiseStream::new(7, 3).rng(TAG_INDEPENDENT)).increment(4, 1.0);
        assert_ne!(a, e);
    }

    #[test]
    fn children_differ_from_parent_and_each_other() {
        let p = NoiseStream::new(1, 2);
        let c0 = p.child("inner", 0);
        let c1 = p.child("inner", 1);
        let q0 = NoiseStream::new(1, 3).child("inner", 0);
        assert_ne!(c0.brownian().increment(2, 1.0), c1.brownian().increment(2, 1.0));
        assert_ne!(c0.brownian().increment(2, 1.0), q0.brownian().increment(2, 1.0));
    }

    #[test]
    fn increments_have_variance_h() {
        let mut g = NoiseStream::new(42, 0).brownian();
        let n = 200_000;
        let h = 0.01;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = g.increment(1, h)[0];
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (h / n as f64).sqrt());
        // sd of the sample variance is h sqrt(2/n)
        assert!((var - h).abs() < 4.0 * h * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn coarsen_sums_blocks() {
        let v: Vec<_> = (0..4).map(|i| DVector::from_element(2, i as f64)).collect();
        let c = coarsen(&v, 2);
        assert_eq!(c, vec![DVector::from_element(2, 1.0), DVector::from_element(2, 5.0)]);
    }
}
