//! Monte Carlo dropout feature extraction and the dropout/ELBO equivalence
//! evaluators.
//!
//! After training, each of the `M` draws re-runs the forward pass with fresh
//! dropout masks (independent of the masks seen in training) and records the
//! last-hidden-layer feature matrix together with the network output. The
//! masks for draw `m` come from the substream `("mc-mask", m)`, so draws are
//! reproducible and the fan-out across workers cannot change the result.

use crate::error::{Error, Result};
use crate::nn::{Network, TrainedNetwork};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `M` Monte Carlo realizations of the last-hidden-layer features.
#[derive(Debug, Clone)]
pub struct FeatureDraws {
    pub m: usize,
    pub n: usize,
    pub feature_dim: usize,
    /// Per draw: `[n, feature_dim]` row-major.
    pub features: Vec<Vec<f64>>,
    /// Per draw: the network outputs `[n]` under the same masks.
    pub outputs: Vec<Vec<f64>>,
    pub seed: u64,
}

impl FeatureDraws {
    pub fn feature_matrix(&self, draw: usize) -> &[f64] {
        &self.features[draw]
    }

    /// Mean feature matrix across draws, `[n, feature_dim]`.
    pub fn mean_features(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n * self.feature_dim];
        for f in &self.features {
            for (m, v) in mean.iter_mut().zip(f.iter()) {
                *m += v;
            }
        }
        let scale = 1.0 / self.m as f64;
        for v in mean.iter_mut() {
            *v *= scale;
        }
        mean
    }
}

/// Draws `m` feature matrices from the trained network.
pub fn mc_features(
    net: &TrainedNetwork,
    x: &Tensor,
    z: Option<&Tensor>,
    m: usize,
    rng: &SeededRng,
) -> Result<FeatureDraws> {
    if m == 0 {
        return Err(Error::InvalidConfig("mc_features needs m >= 1".into()));
    }
    let n = x.outer();
    if let Some(zt) = z {
        if zt.outer() != n {
            return Err(Error::shape("mc_features", format!("{} x rows vs {} z rows", n, zt.outer())));
        }
    }
    let network = &net.network;
    if x.inner_len() != network.input_len() {
        return Err(Error::shape(
            "mc_features",
            format!("row length {} vs network input {}", x.inner_len(), network.input_len()),
        ));
    }
    let zdata = z.map(|t| t.data());

    let results: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..m)
        .into_par_iter()
        .map(|draw| {
            let masks = network.draw_masks(&mut rng.stream("mc-mask", draw as u64));
            let fwd = network.forward(x.data(), n, zdata, Some(&masks), false)?;
            if !fwd.features.iter().all(|v| v.is_finite()) {
                return Err(Error::domain("mc_features", format!("draw {draw} produced non-finite features")));
            }
            Ok((fwd.features, fwd.output))
        })
        .collect();
    let results = results?;

    let (features, outputs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(FeatureDraws {
        m,
        n,
        feature_dim: network.feature_dim(),
        features,
        outputs,
        seed: rng.seed(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DrawsManifest {
    seed: u64,
    m: usize,
    n: usize,
    feature_dim: usize,
}

/// Persists the draws as one tensor file per draw plus a manifest.
pub fn save_feature_draws(dir: &Path, draws: &FeatureDraws) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
    for (i, f) in draws.features.iter().enumerate() {
        let t = Tensor::new(vec![draws.n, draws.feature_dim], f.clone())?;
        crate::io::write_tensor(&dir.join(format!("draw_{i:04}.bct")), &t)?;
    }
    let manifest = DrawsManifest {
        seed: draws.seed,
        m: draws.m,
        n: draws.n,
        feature_dim: draws.feature_dim,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse { path: path.display().to_string(), detail: e.to_string() })?;
    std::fs::write(&path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

/// Inclusion probabilities and spread of the variational mixture, plus the
/// precision and sample size entering the scaled ELBO.
#[derive(Debug, Clone)]
pub struct VariationalSpec {
    /// Per parameterized layer, in network order.
    pub inclusion: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
    pub n: usize,
}

impl VariationalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inclusion.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::domain("VariationalSpec", "inclusion probabilities must be in (0,1]"));
        }
        if self.sigma <= 0.0 || self.tau <= 0.0 || self.n == 0 {
            return Err(Error::domain("VariationalSpec", "sigma, tau, n must be positive"));
        }
        Ok(())
    }
}

/// The weight decay that makes the regularized dropout loss match the scaled
/// negative ELBO: `p_l / (2 tau n)`.
pub fn effective_weight_decay(p_l: f64, tau: f64, n: usize) -> f64 {
    p_l / (2.0 * tau * n as f64)
}

/// Large-width KL approximation for one layer's variational means, with the
/// additive constant fixed to zero: `sum (p/2)(mu^2 + sigma^2 - (1 + ln 2pi)
/// - ln sigma^2)`. Only differences across parameter settings are meaningful.
pub fn kl_approx(p_l: f64, sigma: f64, mu: &[f64]) -> f64 {
    let c = sigma * sigma - (1.0 + (2.0 * std::f64::consts::PI).ln()) - (sigma * sigma).ln();
    mu.iter().map(|m| 0.5 * p_l * (m * m + c)).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct LossComparison {
    pub dropout_loss: f64,
    pub scaled_neg_elbo: f64,
    pub difference: f64,
}

/// Evaluates the L2-regularized dropout loss and the scaled negative ELBO on
/// the same parameters (identified with the variational means) and data.
///
/// With `lambda = p_l / (2 tau n)` the two differ by a constant that does not
/// depend on the parameters; any other weight decay breaks the identity.
/// Gaussian response only.
pub fn elbo_vs_dropout_loss(
    net: &Network,
    x: &Tensor,
    z: Option<&Tensor>,
    y: &[f64],
    spec: &VariationalSpec,
    lambda_w: &[f64],
    lambda_b: &[f64],
) -> Result<LossComparison> {
    spec.validate()?;
    let n = x.outer();
    if y.len() != n {
        return Err(Error::shape("elbo_vs_dropout_loss", "x rows vs y length"));
    }
    let param_layers: Vec<(&[f64], &[f64])> = net
        .params
        .iter()
        .filter_map(|p| {
            let bufs = p.buffers();
            (bufs.len() == 2).then(|| (bufs[0], bufs[1]))
        })
        .collect();
    if spec.inclusion.len() != param_layers.len()
        || lambda_w.len() != param_layers.len()
        || lambda_b.len() != param_layers.len()
    {
        return Err(Error::shape(
            "elbo_vs_dropout_loss",
            format!("{} parameterized layers", param_layers.len()),
        ));
    }

    let zdata = z.map(|t| t.data());
    let fwd = net.forward(x.data(), n, zdata, None, false)?;
    let sse: f64 = y.iter().zip(&fwd.output).map(|(a, b)| (a - b) * (a - b)).sum();
    let nf = n as f64;

    let mut dropout_loss = sse / (2.0 * nf);
    for (l, (w, b)) in param_layers.iter().enumerate() {
        dropout_loss += lambda_w[l] * w.iter().map(|v| v * v).sum::<f64>();
        dropout_loss += lambda_b[l] * b.iter().map(|v| v * v).sum::<f64>();
    }

    // negative Gaussian log likelihood at precision tau
    let tau = spec.tau;
    let neg_loglik = 0.5 * nf * ((2.0 * std::f64::consts::PI).ln() - tau.ln()) + 0.5 * tau * sse;
    let kl_const = spec.sigma * spec.sigma
        - (1.0 + (2.0 * std::f64::consts::PI).ln())
        - (spec.sigma * spec.sigma).ln();
    let mut kl = 0.0;
    for (l, (w, b)) in param_layers.iter().enumerate() {
        let p = spec.inclusion[l];
        kl += 0.5 * p * (w.iter().map(|v| v * v).sum::<f64>() + w.len() as f64 * kl_const);
        kl += 0.5 * p * (b.iter().map(|v| v * v).sum::<f64>() + b.len() as f64 * kl_const);
    }
    let scaled_neg_elbo = (neg_loglik + kl) / (tau * nf);

    Ok(LossComparison {
        dropout_loss,
        scaled_neg_elbo,
        difference: dropout_loss - scaled_neg_elbo,
    })
}
