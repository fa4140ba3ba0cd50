//! Seeded, splittable random number generation.
//!
//! Every stochastic stage of the pipeline (parameter init, dropout masks,
//! data shuffles, MC feature draws, posterior sampling, simulation noise)
//! claims its own substream keyed by a purpose tag and an index. Substream
//! keys are derived from the master seed with a SplitMix64 chain and fed to
//! ChaCha12, so distinct `(tag, index)` pairs yield independent streams and
//! the draw sequence is identical regardless of thread count or platform.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Master seed from which all substreams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> SeededRng {
        SeededRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Claims the substream for `(tag, index)`.
    pub fn stream(&self, tag: &str, index: u64) -> RngStream {
        let mut state = self.seed ^ fnv1a64(tag.as_bytes()).rotate_left(17);
        let _ = splitmix64(&mut state);
        state ^= index.wrapping_mul(0xa24b_aed4_963e_e407);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// A derived master seed, for nesting (one per experiment replicate).
    pub fn derive_seed(&self, tag: &str, index: u64) -> u64 {
        let mut state = self.seed ^ fnv1a64(tag.as_bytes());
        state ^= index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let _ = splitmix64(&mut state);
        splitmix64(&mut state)
    }
}

/// One exclusive substream; never shared between workers.
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn poisson(&mut self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        let dist = Poisson::new(lambda).expect("positive finite Poisson intensity");
        dist.sample(&mut self.rng)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle(&mut self, indices: &mut [usize]) {
        for i in (1..indices.len()).rev() {
            let j = self.rng.random_range(0..=i);
            indices.swap(i, j);
        }
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

/// Tensor of i.i.d. standard normals, deterministic for a given stream.
pub fn draw_normal(stream: &mut RngStream, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    let mut data = vec![0.0; len];
    stream.fill_standard_normal(&mut data);
    Tensor::new(shape.to_vec(), data).expect("shape/data length agree by construction")
}

/// Tensor of independent Bernoulli(p) indicators in `{0, 1}`.
pub fn draw_bernoulli(stream: &mut RngStream, shape: &[usize], p: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidProbability(p));
    }
    let len = shape.iter().product();
    let mut data = vec![0.0; len];
    for v in data.iter_mut() {
        // uniform() < 1.0 always holds, so p = 1 keeps everything.
        *v = if stream.uniform() < p { 1.0 } else { 0.0 };
    }
    Tensor::new(shape.to_vec(), data)
}
