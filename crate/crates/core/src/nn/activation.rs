//! Activation functions and their reverse-mode derivatives.

use serde::{Deserialize, Serialize};

/// Sigmoid outputs are clamped into `[SIGMOID_FLOOR, 1 - SIGMOID_FLOOR]` so a
/// saturated unit keeps binary cross entropy finite.
const SIGMOID_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    TanH,
    Sigmoid,
    Softplus,
    Softmax,
    Exponential,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::TanH => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Softmax => "softmax",
            Activation::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::TanH),
            "sigmoid" => Some(Activation::Sigmoid),
            "softplus" => Some(Activation::Softplus),
            "softmax" => Some(Activation::Softmax),
            "exponential" => Some(Activation::Exponential),
            _ => None,
        }
    }

    /// True for activations with a derivative everywhere (finite-difference
    /// gradient checks are exact for these).
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Activation::Relu)
    }

    /// Applies the activation in place. `group` is the trailing-axis extent:
    /// softmax normalizes over each consecutive group (the channel axis for
    /// convolution outputs, the whole vector for dense outputs); other
    /// activations are elementwise and ignore it.
    pub fn apply(&self, buf: &mut [f64], group: usize) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for v in buf.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::TanH => {
                for v in buf.iter_mut() {
                    *v = v.tanh();
                }
            }
            Activation::Sigmoid => {
                for v in buf.iter_mut() {
                    let s = if *v >= 0.0 {
                        1.0 / (1.0 + (-*v).exp())
                    } else {
                        let e = v.exp();
                        e / (1.0 + e)
                    };
                    *v = s.clamp(SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR);
                }
            }
            Activation::Softplus => {
                for v in buf.iter_mut() {
                    *v = if *v > 0.0 {
                        *v + (-*v).exp().ln_1p()
                    } else {
                        v.exp().ln_1p()
                    };
                }
            }
            Activation::Exponential => {
                for v in buf.iter_mut() {
                    *v = v.exp();
                }
            }
            Activation::Softmax => {
                debug_assert!(group > 0 && buf.len() % group == 0);
                for chunk in buf.chunks_mut(group) {
                    let max = chunk.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let mut sum = 0.0;
                    for v in chunk.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in chunk.iter_mut() {
                        *v /= sum;
                    }
                }
            }
        }
    }

    /// Chain-rule step: fills `dpre` with `dL/d(pre)` given `dL/d(post)`.
    pub fn backprop(&self, pre: &[f64], post: &[f64], dpost: &[f64], dpre: &mut [f64], group: usize) {
        match self {
            Activation::Linear => dpre.copy_from_slice(dpost),
            Activation::Relu => {
                for i in 0..pre.len() {
                    dpre[i] = if pre[i] > 0.0 { dpost[i] } else { 0.0 };
                }
            }
            Activation::TanH => {
                for i in 0..pre.len() {
                    dpre[i] = dpost[i] * (1.0 - post[i] * post[i]);
                }
            }
            Activation::Sigmoid => {
                for i in 0..pre.len() {
                    dpre[i] = dpost[i] * post[i] * (1.0 - post[i]);
                }
            }
            Activation::Softplus => {
                for i in 0..pre.len() {
                    let s = if pre[i] >= 0.0 {
                        1.0 / (1.0 + (-pre[i]).exp())
                    } else {
                        let e = pre[i].exp();
                        e / (1.0 + e)
                    };
                    dpre[i] = dpost[i] * s;
                }
            }
            Activation::Exponential => {
                for i in 0..pre.len() {
                    dpre[i] = dpost[i] * post[i];
                }
            }
            Activation::Softmax => {
                debug_assert!(group > 0 && pre.len() % group == 0);
                for g in 0..pre.len() / group {
                    let lo = g * group;
                    let hi = lo + group;
                    let mut inner = 0.0;
                    for i in lo..hi {
                        inner += dpost[i] * post[i];
                    }
                    for i in lo..hi {
                        dpre[i] = post[i] * (dpost[i] - inner);
                    }
                }
            }
        }
    }
}
