//! Adam optimizer with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators, one pair per parameter buffer.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(buffer_lens: &[usize]) -> AdamState {
        AdamState {
            m: buffer_lens.iter().map(|&l| vec![0.0; l]).collect(),
            v: buffer_lens.iter().map(|&l| vec![0.0; l]).collect(),
            t: 0,
        }
    }

    pub fn moments(&self, buffer: usize) -> (&[f64], &[f64]) {
        (&self.m[buffer], &self.v[buffer])
    }
}

/// One Adam update across all parameter buffers. `t` must already be
/// incremented to the current step (t >= 1) before calling.
pub fn adam_step(
    params: &mut [&mut Vec<f64>],
    grads: &[&[f64]],
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert!(state.t >= 1);
    let b1t = 1.0 - hyper.beta1.powi(state.t as i32);
    let b2t = 1.0 - hyper.beta2.powi(state.t as i32);
    for (bi, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
        let m = &mut state.m[bi];
        let v = &mut state.v[bi];
        for i in 0..p.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let mhat = m[i] / b1t;
            let vhat = v[i] / b2t;
            p[i] -= hyper.learning_rate * mhat / (vhat.sqrt() + hyper.epsilon);
        }
    }
}
