//! Mini-batch Adam training with fresh dropout masks per step and early
//! stopping on a held-out validation split.
//!
//! Training is single-threaded and fully determined by the seed: the
//! validation split, parameter init, per-epoch shuffles, and per-step masks
//! all come from fixed substreams, so one config and seed always produce the
//! same `TrainedNetwork`.

use super::{loss_eval, loss_grad, AdamState, LayerSpec, Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub network: Network,
    pub log: TrainingLog,
}

impl TrainedNetwork {
    pub fn feature_dim(&self) -> usize {
        self.network.feature_dim()
    }

    /// Covariate-block weights of the output layer (the point estimate the
    /// plain network reports for the covariate coefficients).
    pub fn gamma_estimate(&self) -> Vec<f64> {
        self.network.gamma_block()
    }
}

/// Gathers rows `idx` of a `[n, row_len]` buffer into a contiguous batch.
fn gather_rows(src: &[f64], row_len: usize, idx: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in idx {
        out.extend_from_slice(&src[i * row_len..(i + 1) * row_len]);
    }
}

/// Trains a network on `(x, z, y)`.
///
/// `x` is `[n, input...]`, `z` is `[n, p]` (pass a width-0 tensor only when
/// the config has no concatenate layer), `y` is `[n]`. Returns the
/// best-validation parameters along with the per-epoch loss log.
pub fn train(
    config: NetworkConfig,
    x: &Tensor,
    z: Option<&Tensor>,
    y: &Tensor,
    rng: &SeededRng,
) -> Result<TrainedNetwork> {
    let n = x.outer();
    if y.len() != n {
        return Err(Error::shape("train", format!("{} x rows vs {} responses", n, y.len())));
    }
    let z_width = z.map_or(0, |t| t.shape()[1]);
    if let Some(zt) = z {
        if zt.outer() != n {
            return Err(Error::shape("train", format!("{} x rows vs {} z rows", n, zt.outer())));
        }
    }
    let input_shape = canonical_input_shape(&config, x)?;
    let mut net = Network::new(config, &input_shape, z_width, &mut rng.stream("init", 0))?;
    let cfg = net.config.clone();

    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok(TrainedNetwork { network: net, log });
    }

    // Validation split: seeded shuffle, then the tail fraction is held out.
    let mut order: Vec<usize> = (0..n).collect();
    rng.stream("val-split", 0).shuffle(&mut order);
    let n_val = ((n as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let (train_idx, val_idx) = order.split_at(n - n_val);
    let train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let in_len = net.input_len();
    let zdata = z.map(|t| t.data());

    let buffer_lens: Vec<usize> = net
        .params
        .iter()
        .flat_map(|p| p.buffers().into_iter().map(|b| b.len()))
        .collect();
    let mut adam = AdamState::new(&buffer_lens);

    let mut xb = Vec::new();
    let mut zb = Vec::new();
    let mut yb: Vec<f64> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<Vec<super::LayerParams>> = None;
    let mut bad_epochs = 0usize;
    let mut step: u64 = 0;

    let mut epoch_order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        rng.stream("shuffle", epoch as u64).shuffle(&mut epoch_order);
        let mut train_loss_sum = 0.0;
        for (batch_no, chunk) in epoch_order.chunks(cfg.batch_size).enumerate() {
            gather_rows(x.data(), in_len, chunk, &mut xb);
            if let Some(zd) = zdata {
                gather_rows(zd, z_width, chunk, &mut zb);
            }
            yb.clear();
            yb.extend(chunk.iter().map(|&i| y.data()[i]));

            let masks = net.draw_masks(&mut rng.stream("mask", step));
            step += 1;
            let fwd = net.forward(&xb, chunk.len(), zdata.map(|_| zb.as_slice()), Some(&masks), true)?;
            let batch_loss = match loss_eval(cfg.loss, &yb, &fwd.output) {
                Ok(l) if l.is_finite() => l,
                _ => return Err(Error::NonFiniteLoss { epoch, batch: batch_no }),
            };
            train_loss_sum += batch_loss * chunk.len() as f64;

            let mut dout = vec![0.0; fwd.output.len()];
            loss_grad(cfg.loss, &yb, &fwd.output, &mut dout)?;
            let grads = net.backward(&fwd, &dout);

            adam.t += 1;
            let grad_bufs: Vec<&[f64]> =
                grads.per_layer.iter().flat_map(|g| g.buffers()).collect();
            let mut param_bufs: Vec<&mut Vec<f64>> =
                net.params.iter_mut().flat_map(|p| p.buffers_mut()).collect();
            super::adam_step(&mut param_bufs, &grad_bufs, &mut adam, &cfg.optimizer);
        }
        let train_loss = train_loss_sum / train_idx.len() as f64;

        // Validation pass runs without dropout; inverted scaling makes the
        // mask-free network the expectation of the masked one.
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            gather_rows(x.data(), in_len, &val_idx, &mut xb);
            if let Some(zd) = zdata {
                gather_rows(zd, z_width, &val_idx, &mut zb);
            }
            yb.clear();
            yb.extend(val_idx.iter().map(|&i| y.data()[i]));
            let fwd = net.forward(&xb, val_idx.len(), zdata.map(|_| zb.as_slice()), None, false)?;
            match loss_eval(cfg.loss, &yb, &fwd.output) {
                Ok(l) if l.is_finite() => l,
                _ => return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX }),
            }
        };

        log.epochs.push(EpochStats { epoch, train_loss, val_loss });
        if val_loss < best_val {
            best_val = val_loss;
            best_params = Some(net.params.clone());
            log.best_epoch = Some(epoch);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if !val_idx.is_empty() && bad_epochs >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        net.params = best;
    }
    Ok(TrainedNetwork { network: net, log })
}

/// Derives the canonical per-row input shape from the data tensor and the
/// first layer kind: `[h, w, c]` for 2-D convolution, `[len, 1, c]` for 1-D,
/// flat `[k]` otherwise.
pub fn canonical_input_shape(config: &NetworkConfig, x: &Tensor) -> Result<Vec<usize>> {
    let row = &x.shape()[1..];
    match config.layers.first() {
        Some(LayerSpec::Conv2D { .. }) => match row.len() {
            2 => Ok(vec![row[0], row[1], 1]),
            3 => Ok(row.to_vec()),
            _ => Err(Error::shape("input", format!("conv2d needs image rows, got {row:?}"))),
        },
        Some(LayerSpec::Conv1D { .. }) => match row.len() {
            1 => Ok(vec![row[0], 1, 1]),
            2 => Ok(vec![row[0], 1, row[1]]),
            _ => Err(Error::shape("input", format!("conv1d needs signal rows, got {row:?}"))),
        },
        _ => Ok(vec![row.iter().product()]),
    }
}
