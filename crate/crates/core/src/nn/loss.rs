//! Training losses: mean squared error, binary cross entropy, Poisson loss.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Stabilizer inside the Poisson loss log term.
pub const POISSON_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Bce,
    Poisson,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
            LossKind::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Option<LossKind> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Some(LossKind::Mse),
            "bce" => Some(LossKind::Bce),
            "poisson" | "poissonloss" => Some(LossKind::Poisson),
            _ => None,
        }
    }
}

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::shape(
            "loss",
            format!("y has {} entries, yhat has {}", y.len(), yhat.len()),
        ));
    }
    Ok(())
}

/// Evaluates the loss.
///
/// MSE: `(1/N) sum (y - yhat)^2`. BCE: `-(1/N) sum [y ln yhat + (1-y) ln(1-yhat)]`
/// with `yhat` required in (0,1). Poisson: `(1/N) sum [yhat - y ln(yhat + eps)]`
/// with `yhat >= 0`, `y >= 0` and `eps = 1e-7`.
pub fn loss_eval(kind: LossKind, y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let n = y.len() as f64;
    match kind {
        LossKind::Mse => {
            let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(s / n)
        }
        LossKind::Bce => {
            let mut s = 0.0;
            for (&yi, &pi) in y.iter().zip(yhat) {
                if !(pi > 0.0 && pi < 1.0) {
                    return Err(Error::domain("bce", format!("prediction {pi} outside (0,1)")));
                }
                s -= yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln();
            }
            Ok(s / n)
        }
        LossKind::Poisson => {
            let mut s = 0.0;
            for (&yi, &li) in y.iter().zip(yhat) {
                if li < 0.0 || yi < 0.0 {
                    return Err(Error::domain(
                        "poisson loss",
                        format!("negative value (y: {yi}, yhat: {li})"),
                    ));
                }
                s += li - yi * (li + POISSON_EPS).ln();
            }
            Ok(s / n)
        }
    }
}

/// Fills `grad` with `dL/d(yhat)`.
pub fn loss_grad(kind: LossKind, y: &[f64], yhat: &[f64], grad: &mut [f64]) -> Result<()> {
    check_lengths(y, yhat)?;
    let n = y.len() as f64;
    match kind {
        LossKind::Mse => {
            for i in 0..y.len() {
                grad[i] = 2.0 * (yhat[i] - y[i]) / n;
            }
        }
        LossKind::Bce => {
            for i in 0..y.len() {
                let p = yhat[i];
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::domain("bce", format!("prediction {p} outside (0,1)")));
                }
                grad[i] = ((1.0 - y[i]) / (1.0 - p) - y[i] / p) / n;
            }
        }
        LossKind::Poisson => {
            for i in 0..y.len() {
                grad[i] = (1.0 - y[i] / (yhat[i] + POISSON_EPS)) / n;
            }
        }
    }
    Ok(())
}
