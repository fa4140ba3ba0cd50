//! Config-driven feed-forward networks with convolution, pooling, dense,
//! dropout, and concatenate layers, plus reverse-mode gradients.
//!
//! Layout conventions: convolution tensors are channels-last `[rows, cols,
//! channels]` (a 1-D signal is carried as `[len, 1, channels]`), flat vectors
//! are `[width]`, and every buffer stacks the batch along the leading axis.
//! Convolution is valid-mode with no padding; pooling floors away remainders.
//! Dropout masks are drawn once per step and shared across the batch rows,
//! with inverted scaling `1/(1 - rate)` applied identically during training
//! and MC prediction so feature scales match between the two.

pub mod activation;
pub mod adam;
pub mod config_text;
pub mod loss;
pub mod train;

pub use activation::Activation;
pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{loss_eval, loss_grad, LossKind, POISSON_EPS};
pub use train::{train, EpochStats, TrainedNetwork, TrainingLog};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv2D {
        channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        activation: Activation,
    },
    Conv1D {
        channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    MaxPool {
        window: (usize, usize),
    },
    Flatten,
    Dense {
        width: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Concatenate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    pub optimizer: AdamHyper,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl NetworkConfig {
    /// Walks the layer stack against an input shape, returning every
    /// intermediate shape. Fails on any inconsistency.
    pub fn chain(&self, input_shape: &[usize], z_width: usize) -> Result<ShapeChain> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("no layers".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction {} outside [0,1)",
                self.validation_fraction
            )));
        }
        let mut shape = input_shape.to_vec();
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(Error::shape("chain", format!("bad input shape {shape:?}")));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(shape.clone());
        let mut concat_at = None;
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = match layer {
                LayerSpec::Conv2D { channels, kernel, stride, .. } => {
                    conv_out_shape(&shape, *channels, *kernel, *stride, idx)?
                }
                LayerSpec::Conv1D { channels, kernel, stride, .. } => {
                    let s = conv_out_shape(&shape, *channels, (*kernel, 1), (*stride, 1), idx)?;
                    if shape.len() == 3 && shape[1] != 1 {
                        return Err(Error::shape(
                            format!("layer {idx} (conv1d)"),
                            format!("input {shape:?} is not a 1-D signal"),
                        ));
                    }
                    s
                }
                LayerSpec::MaxPool { window } => {
                    if window.0 == 0 || window.1 == 0 {
                        return Err(Error::shape(
                            format!("layer {idx} (maxpool)"),
                            "zero-extent window".to_string(),
                        ));
                    }
                    if shape.len() != 3 {
                        return Err(Error::shape(
                            format!("layer {idx} (maxpool)"),
                            format!("needs a spatial input, got {shape:?}"),
                        ));
                    }
                    // 1-D signals pool along the length axis only.
                    let wc = if shape[1] == 1 { 1 } else { window.1 };
                    let oh = shape[0] / window.0;
                    let ow = shape[1] / wc;
                    if oh == 0 || ow == 0 {
                        return Err(Error::shape(
                            format!("layer {idx} (maxpool)"),
                            format!("window {window:?} larger than input {shape:?}"),
                        ));
                    }
                    vec![oh, ow, shape[2]]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
                LayerSpec::Dense { width, .. } => {
                    if *width == 0 {
                        return Err(Error::InvalidConfig(format!("layer {idx}: zero-width dense")));
                    }
                    if shape.len() != 1 {
                        return Err(Error::shape(
                            format!("layer {idx} (dense)"),
                            format!("needs a flat input, got {shape:?} (missing flatten?)"),
                        ));
                    }
                    vec![*width]
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::InvalidRate(*rate));
                    }
                    if idx == 0 {
                        return Err(Error::InvalidConfig(
                            "dropout cannot be applied to the raw input".into(),
                        ));
                    }
                    shape
                }
                LayerSpec::Concatenate => {
                    if concat_at.is_some() {
                        return Err(Error::InvalidConfig("concatenate may appear only once".into()));
                    }
                    if shape.len() != 1 {
                        return Err(Error::shape(
                            format!("layer {idx} (concatenate)"),
                            format!("needs a flat input, got {shape:?}"),
                        ));
                    }
                    if z_width == 0 {
                        return Err(Error::InvalidConfig(
                            "concatenate layer requires covariates".into(),
                        ));
                    }
                    concat_at = Some(idx);
                    vec![shape[0] + z_width]
                }
            };
            shapes.push(shape.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "last layer must be dense (the output layer)".into(),
                ))
            }
        }
        if shape.len() != 1 {
            return Err(Error::shape("chain", format!("output shape {shape:?} is not flat")));
        }
        // Features are tapped right before the concatenate layer (post
        // dropout); without one, right before the output layer.
        let feature_layer = concat_at.unwrap_or(self.layers.len() - 1);
        let feature_dim = shapes[feature_layer].iter().product();
        Ok(ShapeChain {
            shapes,
            output_dim: shape[0],
            feature_layer,
            feature_dim,
            concat_at,
        })
    }
}

fn conv_out_shape(
    shape: &[usize],
    channels: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    idx: usize,
) -> Result<Vec<usize>> {
    let ctx = format!("layer {idx} (conv)");
    if shape.len() != 3 {
        return Err(Error::shape(ctx, format!("needs [rows, cols, channels], got {shape:?}")));
    }
    if channels == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::InvalidConfig(format!("layer {idx}: zero conv extent")));
    }
    if kernel.0 > shape[0] || kernel.1 > shape[1] {
        return Err(Error::shape(
            ctx,
            format!("kernel {kernel:?} exceeds input extent {shape:?}"),
        ));
    }
    let oh = (shape[0] - kernel.0) / stride.0 + 1;
    let ow = (shape[1] - kernel.1) / stride.1 + 1;
    Ok(vec![oh, ow, channels])
}

#[derive(Debug, Clone)]
pub struct ShapeChain {
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the
    /// network output shape.
    pub shapes: Vec<Vec<usize>>,
    pub output_dim: usize,
    /// Index of the layer whose input is recorded as the feature vector.
    pub feature_layer: usize,
    pub feature_dim: usize,
    pub concat_at: Option<usize>,
}

/// Per-layer parameters; `Empty` for layers without any.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv {
        /// `[cout, kh, kw, cin]` row-major.
        kernels: Vec<f64>,
        bias: Vec<f64>,
        cout: usize,
        kh: usize,
        kw: usize,
        cin: usize,
    },
    Dense {
        /// `[kout, kin]` row-major.
        w: Vec<f64>,
        b: Vec<f64>,
        kout: usize,
        kin: usize,
    },
    Empty,
}

impl LayerParams {
    fn zeros_like(&self) -> LayerParams {
        match self {
            LayerParams::Conv { kernels, bias, cout, kh, kw, cin } => LayerParams::Conv {
                kernels: vec![0.0; kernels.len()],
                bias: vec![0.0; bias.len()],
                cout: *cout,
                kh: *kh,
                kw: *kw,
                cin: *cin,
            },
            LayerParams::Dense { w, b, kout, kin } => LayerParams::Dense {
                w: vec![0.0; w.len()],
                b: vec![0.0; b.len()],
                kout: *kout,
                kin: *kin,
            },
            LayerParams::Empty => LayerParams::Empty,
        }
    }

    /// Flat views over the parameter buffers, weights before biases.
    pub fn buffers(&self) -> Vec<&[f64]> {
        match self {
            LayerParams::Conv { kernels, bias, .. } => vec![kernels, bias],
            LayerParams::Dense { w, b, .. } => vec![w, b],
            LayerParams::Empty => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            LayerParams::Conv { kernels, bias, .. } => vec![kernels, bias],
            LayerParams::Dense { w, b, .. } => vec![w, b],
            LayerParams::Empty => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<LayerParams>,
}

/// A network with instantiated parameters.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub input_shape: Vec<usize>,
    pub z_width: usize,
    pub params: Vec<LayerParams>,
    chain: ShapeChain,
}

enum LayerCache {
    Conv {
        patches: Vec<f64>,
        rows: usize,
        patch_w: usize,
        pre: Vec<f64>,
        post: Vec<f64>,
        in_shape: [usize; 3],
        stride: (usize, usize),
        kernel: (usize, usize),
    },
    Pool {
        argmax: Vec<usize>,
        in_len: usize,
    },
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
        post: Vec<f64>,
    },
    Dropout {
        scaled_mask: Vec<f64>,
    },
    Passthrough,
}

/// Result of one forward pass over a batch.
pub struct Forward {
    /// `[batch, output_dim]` row-major.
    pub output: Vec<f64>,
    /// `[batch, feature_dim]`: last hidden layer, pre-concatenate.
    pub features: Vec<f64>,
    pub batch: usize,
    caches: Vec<LayerCache>,
}

impl Network {
    /// Validates the config against the data shapes and initializes
    /// parameters: Glorot-uniform weights, zero biases.
    pub fn new(
        config: NetworkConfig,
        input_shape: &[usize],
        z_width: usize,
        init: &mut RngStream,
    ) -> Result<Network> {
        let chain = config.chain(input_shape, z_width)?;
        let mut params = Vec::with_capacity(config.layers.len());
        for (idx, layer) in config.layers.iter().enumerate() {
            let in_shape = &chain.shapes[idx];
            let p = match layer {
                LayerSpec::Conv2D { channels, kernel, stride: _, .. } => {
                    init_conv(*channels, *kernel, in_shape[2], init)
                }
                LayerSpec::Conv1D { channels, kernel, .. } => {
                    init_conv(*channels, (*kernel, 1), in_shape[2], init)
                }
                LayerSpec::Dense { width, .. } => {
                    let kin = in_shape[0];
                    let kout = *width;
                    let limit = (6.0 / (kin + kout) as f64).sqrt();
                    let mut w = vec![0.0; kout * kin];
                    for v in w.iter_mut() {
                        *v = init.uniform_range(-limit, limit);
                    }
                    LayerParams::Dense { w, b: vec![0.0; kout], kout, kin }
                }
                _ => LayerParams::Empty,
            };
            params.push(p);
        }
        Ok(Network { config, input_shape: input_shape.to_vec(), z_width, params, chain })
    }

    /// Rebuilds a network around explicit parameters (loading a persisted
    /// model); shapes are validated against the config chain.
    pub fn with_params(
        config: NetworkConfig,
        input_shape: &[usize],
        z_width: usize,
        params: Vec<LayerParams>,
    ) -> Result<Network> {
        let chain = config.chain(input_shape, z_width)?;
        if params.len() != config.layers.len() {
            return Err(Error::shape(
                "Network::with_params",
                format!("{} param entries for {} layers", params.len(), config.layers.len()),
            ));
        }
        for (idx, (layer, p)) in config.layers.iter().zip(&params).enumerate() {
            let in_shape = &chain.shapes[idx];
            let ok = match (layer, p) {
                (LayerSpec::Conv2D { channels, kernel, .. }, LayerParams::Conv { kernels, bias, cout, kh, kw, cin }) => {
                    *cout == *channels
                        && (*kh, *kw) == *kernel
                        && *cin == in_shape[2]
                        && kernels.len() == cout * kh * kw * cin
                        && bias.len() == *cout
                }
                (LayerSpec::Conv1D { channels, kernel, .. }, LayerParams::Conv { kernels, bias, cout, kh, kw, cin }) => {
                    *cout == *channels
                        && *kh == *kernel
                        && *kw == 1
                        && *cin == in_shape[2]
                        && kernels.len() == cout * kh * kw * cin
                        && bias.len() == *cout
                }
                (LayerSpec::Dense { width, .. }, LayerParams::Dense { w, b, kout, kin }) => {
                    *kout == *width && *kin == in_shape[0] && w.len() == kout * kin && b.len() == *kout
                }
                (
                    LayerSpec::MaxPool { .. }
                    | LayerSpec::Flatten
                    | LayerSpec::Dropout { .. }
                    | LayerSpec::Concatenate,
                    LayerParams::Empty,
                ) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::shape(
                    "Network::with_params",
                    format!("layer {idx} parameters do not match the config"),
                ));
            }
        }
        Ok(Network { config, input_shape: input_shape.to_vec(), z_width, params, chain })
    }

    pub fn shape_chain(&self) -> &ShapeChain {
        &self.chain
    }

    pub fn feature_dim(&self) -> usize {
        self.chain.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.chain.output_dim
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Dropout rates in layer order.
    pub fn dropout_rates(&self) -> Vec<f64> {
        self.config
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect()
    }

    /// Draws one set of dropout masks (entries are 1 with probability
    /// `1 - rate`), shared by every row of the batch.
    pub fn draw_masks(&self, stream: &mut RngStream) -> Vec<Vec<f64>> {
        let mut masks = Vec::new();
        for (idx, layer) in self.config.layers.iter().enumerate() {
            if let LayerSpec::Dropout { rate } = layer {
                let units: usize = self.chain.shapes[idx].iter().product();
                let mut mask = vec![0.0; units];
                for v in mask.iter_mut() {
                    *v = if stream.uniform() < 1.0 - rate { 1.0 } else { 0.0 };
                }
                masks.push(mask);
            }
        }
        masks
    }

    /// Point estimate of the covariate coefficients: the columns of the
    /// output layer's weight matrix that multiply the concatenated
    /// covariates. Empty when the config has no concatenate layer.
    pub fn gamma_block(&self) -> Vec<f64> {
        let Some(concat_at) = self.chain.concat_at else {
            return Vec::new();
        };
        let feat_w: usize = self.chain.shapes[concat_at].iter().product();
        match self.params.last() {
            Some(LayerParams::Dense { w, kout, kin, .. }) => {
                let mut out = Vec::with_capacity(kout * (kin - feat_w));
                for r in 0..*kout {
                    out.extend_from_slice(&w[r * kin + feat_w..(r + 1) * kin]);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Forward pass over a batch.
    ///
    /// `x` is `[batch, input_shape...]`, `z` is `[batch, z_width]` (required
    /// when the config concatenates covariates). `masks` enables dropout; with
    /// `None` dropout layers pass activations through unchanged.
    pub fn forward(
        &self,
        x: &[f64],
        batch: usize,
        z: Option<&[f64]>,
        masks: Option<&[Vec<f64>]>,
        keep_caches: bool,
    ) -> Result<Forward> {
        let in_len = self.input_len();
        if x.len() != batch * in_len {
            return Err(Error::shape(
                "forward",
                format!("x has {} values, expected {} x {}", x.len(), batch, in_len),
            ));
        }
        if self.chain.concat_at.is_some() {
            match z {
                Some(zb) if zb.len() == batch * self.z_width => {}
                Some(zb) => {
                    return Err(Error::shape(
                        "forward",
                        format!("z has {} values, expected {} x {}", zb.len(), batch, self.z_width),
                    ))
                }
                None => return Err(Error::shape("forward", "config needs covariates, z missing")),
            }
        }
        if let Some(ms) = masks {
            let expected = self.dropout_rates().len();
            if ms.len() != expected {
                return Err(Error::shape(
                    "forward",
                    format!("{} masks for {} dropout layers", ms.len(), expected),
                ));
            }
        }

        let mut buf = x.to_vec();
        let mut caches: Vec<LayerCache> = Vec::new();
        let mut features = Vec::new();
        let mut drop_idx = 0usize;
        for (idx, layer) in self.config.layers.iter().enumerate() {
            if idx == self.chain.feature_layer {
                features = buf.clone();
            }
            let in_shape = &self.chain.shapes[idx];
            match layer {
                LayerSpec::Conv2D { activation, stride, kernel, .. } => {
                    let cache = self.conv_forward(idx, &buf, batch, in_shape, *kernel, *stride, *activation, keep_caches)?;
                    buf = match &cache {
                        LayerCache::Conv { post, .. } => post.clone(),
                        _ => unreachable!(),
                    };
                    if keep_caches {
                        caches.push(cache);
                    }
                }
                LayerSpec::Conv1D { activation, stride, kernel, .. } => {
                    let cache = self.conv_forward(idx, &buf, batch, in_shape, (*kernel, 1), (*stride, 1), *activation, keep_caches)?;
                    buf = match &cache {
                        LayerCache::Conv { post, .. } => post.clone(),
                        _ => unreachable!(),
                    };
                    if keep_caches {
                        caches.push(cache);
                    }
                }
                LayerSpec::MaxPool { window } => {
                    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                    let wc = if w == 1 { 1 } else { window.1 };
                    let (out, argmax) = maxpool_batch(&buf, batch, h, w, c, window.0, wc);
                    if keep_caches {
                        caches.push(LayerCache::Pool { argmax, in_len: buf.len() });
                    }
                    buf = out;
                }
                LayerSpec::Flatten => {
                    if keep_caches {
                        caches.push(LayerCache::Passthrough);
                    }
                }
                LayerSpec::Dense { activation, .. } => {
                    let (w, b, kout, kin) = match &self.params[idx] {
                        LayerParams::Dense { w, b, kout, kin } => (w, b, *kout, *kin),
                        _ => unreachable!(),
                    };
                    let mut pre = vec![0.0; batch * kout];
                    matmul_a_bt(batch, kin, kout, &buf, w, &mut pre);
                    for r in 0..batch {
                        for (o, bv) in pre[r * kout..(r + 1) * kout].iter_mut().zip(b.iter()) {
                            *o += bv;
                        }
                    }
                    let mut post = pre.clone();
                    activation.apply(&mut post, kout);
                    if keep_caches {
                        caches.push(LayerCache::Dense { input: std::mem::take(&mut buf), pre, post: post.clone() });
                    }
                    buf = post;
                }
                LayerSpec::Dropout { rate } => {
                    let units: usize = in_shape.iter().product();
                    match masks {
                        Some(ms) => {
                            let mask = &ms[drop_idx];
                            if mask.len() != units {
                                return Err(Error::shape(
                                    "dropout",
                                    format!("mask len {} vs {} units", mask.len(), units),
                                ));
                            }
                            let scale = 1.0 / (1.0 - rate);
                            let mut scaled = mask.clone();
                            for v in scaled.iter_mut() {
                                *v *= scale;
                            }
                            for r in 0..batch {
                                let row = &mut buf[r * units..(r + 1) * units];
                                for (v, m) in row.iter_mut().zip(scaled.iter()) {
                                    *v *= m;
                                }
                            }
                            if keep_caches {
                                caches.push(LayerCache::Dropout { scaled_mask: scaled });
                            }
                        }
                        None => {
                            if keep_caches {
                                caches.push(LayerCache::Passthrough);
                            }
                        }
                    }
                    drop_idx += 1;
                }
                LayerSpec::Concatenate => {
                    let feat_w: usize = in_shape.iter().product();
                    let zb = z.expect("checked above");
                    let p = self.z_width;
                    let mut out = vec![0.0; batch * (feat_w + p)];
                    for r in 0..batch {
                        out[r * (feat_w + p)..r * (feat_w + p) + feat_w]
                            .copy_from_slice(&buf[r * feat_w..(r + 1) * feat_w]);
                        out[r * (feat_w + p) + feat_w..(r + 1) * (feat_w + p)]
                            .copy_from_slice(&zb[r * p..(r + 1) * p]);
                    }
                    if keep_caches {
                        caches.push(LayerCache::Passthrough);
                    }
                    buf = out;
                }
            }
        }
        Ok(Forward { output: buf, features, batch, caches })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_forward(
        &self,
        idx: usize,
        buf: &[f64],
        batch: usize,
        in_shape: &[usize],
        kernel: (usize, usize),
        stride: (usize, usize),
        activation: Activation,
        keep_caches: bool,
    ) -> Result<LayerCache> {
        let (kernels, bias, cout, kh, kw, cin) = match &self.params[idx] {
            LayerParams::Conv { kernels, bias, cout, kh, kw, cin } => {
                (kernels, bias, *cout, *kh, *kw, *cin)
            }
            _ => unreachable!(),
        };
        let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
        if c != cin {
            return Err(Error::shape(
                format!("layer {idx} (conv)"),
                format!("channel mismatch: input {c}, kernels {cin}"),
            ));
        }
        let (patches, oh, ow) = im2col(buf, batch, h, w, c, kh, kw, stride.0, stride.1);
        let rows = batch * oh * ow;
        let patch_w = kh * kw * c;
        let wm = kernel_matrix(kernels, cout, kh, kw, cin);
        let mut pre = vec![0.0; rows * cout];
        matmul(rows, patch_w, cout, &patches, &wm, &mut pre);
        for r in 0..rows {
            for (o, bv) in pre[r * cout..(r + 1) * cout].iter_mut().zip(bias.iter()) {
                *o += bv;
            }
        }
        let mut post = pre.clone();
        activation.apply(&mut post, cout);
        Ok(LayerCache::Conv {
            patches: if keep_caches { patches } else { Vec::new() },
            rows,
            patch_w,
            pre: if keep_caches { pre } else { Vec::new() },
            post,
            in_shape: [h, w, c],
            stride,
            kernel,
        })
    }

    /// Smallest `|pre-activation|` across the ReLU layers of a cached
    /// forward pass (`None` without any ReLU). Finite-difference gradient
    /// checks are only valid at points bounded away from the kink.
    pub fn min_relu_preactivation(&self, fwd: &Forward) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (layer, cache) in self.config.layers.iter().zip(&fwd.caches) {
            let act = match layer {
                LayerSpec::Conv2D { activation, .. }
                | LayerSpec::Conv1D { activation, .. }
                | LayerSpec::Dense { activation, .. } => activation,
                _ => continue,
            };
            if *act != Activation::Relu {
                continue;
            }
            let pre = match cache {
                LayerCache::Conv { pre, .. } => pre,
                LayerCache::Dense { pre, .. } => pre,
                _ => continue,
            };
            for v in pre {
                let a = v.abs();
                min = Some(min.map_or(a, |m: f64| m.min(a)));
            }
        }
        min
    }

    /// Exact reverse-mode gradients of the batch loss with respect to every
    /// parameter, given `dL/d(output)`. The forward pass must have been run
    /// with `keep_caches = true`; dropout masks are held fixed.
    pub fn backward(&self, fwd: &Forward, grad_output: &[f64]) -> Gradients {
        assert_eq!(
            fwd.caches.len(),
            self.config.layers.len(),
            "backward needs a cached forward pass"
        );
        let batch = fwd.batch;
        let mut grads: Vec<LayerParams> = self.params.iter().map(|p| p.zeros_like()).collect();
        let mut dbuf = grad_output.to_vec();

        for idx in (0..self.config.layers.len()).rev() {
            let layer = &self.config.layers[idx];
            let cache = &fwd.caches[idx];
            match (layer, cache) {
                (LayerSpec::Dense { activation, .. }, LayerCache::Dense { input, pre, post }) => {
                    let (w, kout, kin) = match &self.params[idx] {
                        LayerParams::Dense { w, kout, kin, .. } => (w, *kout, *kin),
                        _ => unreachable!(),
                    };
                    let mut dpre = vec![0.0; pre.len()];
                    activation.backprop(pre, post, &dbuf, &mut dpre, kout);
                    if let LayerParams::Dense { w: dw, b: db, .. } = &mut grads[idx] {
                        matmul_at_b(batch, kout, kin, &dpre, input, dw);
                        for r in 0..batch {
                            for (gb, g) in db.iter_mut().zip(&dpre[r * kout..(r + 1) * kout]) {
                                *gb += g;
                            }
                        }
                    }
                    let mut dinput = vec![0.0; batch * kin];
                    matmul(batch, kout, kin, &dpre, w, &mut dinput);
                    dbuf = dinput;
                }
                (
                    LayerSpec::Conv2D { activation, .. } | LayerSpec::Conv1D { activation, .. },
                    LayerCache::Conv { patches, rows, patch_w, pre, post, in_shape, stride, kernel },
                ) => {
                    let (kernels, cout, kh, kw, cin) = match &self.params[idx] {
                        LayerParams::Conv { kernels, cout, kh, kw, cin, .. } => {
                            (kernels, *cout, *kh, *kw, *cin)
                        }
                        _ => unreachable!(),
                    };
                    let mut dpre = vec![0.0; pre.len()];
                    activation.backprop(pre, post, &dbuf, &mut dpre, cout);
                    let mut dwm = vec![0.0; patch_w * cout];
                    matmul_at_b(*rows, *patch_w, cout, patches, &dpre, &mut dwm);
                    if let LayerParams::Conv { kernels: dk, bias: db, .. } = &mut grads[idx] {
                        scatter_kernel_matrix(&dwm, dk, cout, kh, kw, cin);
                        for r in 0..*rows {
                            for (gb, g) in db.iter_mut().zip(&dpre[r * cout..(r + 1) * cout]) {
                                *gb += g;
                            }
                        }
                    }
                    let wm = kernel_matrix(kernels, cout, kh, kw, cin);
                    let mut dpatches = vec![0.0; rows * patch_w];
                    matmul_a_bt(*rows, cout, *patch_w, &dpre, &wm, &mut dpatches);
                    dbuf = col2im(
                        &dpatches, batch, in_shape[0], in_shape[1], in_shape[2], *kernel, *stride,
                    );
                }
                (LayerSpec::MaxPool { .. }, LayerCache::Pool { argmax, in_len }) => {
                    let mut din = vec![0.0; *in_len];
                    for (out_i, &src) in argmax.iter().enumerate() {
                        din[src] += dbuf[out_i];
                    }
                    dbuf = din;
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { scaled_mask }) => {
                    let units = scaled_mask.len();
                    for r in 0..batch {
                        let row = &mut dbuf[r * units..(r + 1) * units];
                        for (v, m) in row.iter_mut().zip(scaled_mask.iter()) {
                            *v *= m;
                        }
                    }
                }
                (LayerSpec::Dropout { .. }, LayerCache::Passthrough) => {}
                (LayerSpec::Flatten, _) => {}
                (LayerSpec::Concatenate, _) => {
                    let feat_w: usize = self.chain.shapes[idx].iter().product();
                    let p = self.z_width;
                    let mut din = vec![0.0; batch * feat_w];
                    for r in 0..batch {
                        din[r * feat_w..(r + 1) * feat_w]
                            .copy_from_slice(&dbuf[r * (feat_w + p)..r * (feat_w + p) + feat_w]);
                    }
                    dbuf = din;
                }
                _ => unreachable!("cache/layer mismatch"),
            }
        }
        Gradients { per_layer: grads }
    }
}

fn init_conv(cout: usize, kernel: (usize, usize), cin: usize, init: &mut RngStream) -> LayerParams {
    let (kh, kw) = kernel;
    let fan_in = (kh * kw * cin) as f64;
    let fan_out = (kh * kw * cout) as f64;
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    let mut kernels = vec![0.0; cout * kh * kw * cin];
    for v in kernels.iter_mut() {
        *v = init.uniform_range(-limit, limit);
    }
    LayerParams::Conv { kernels, bias: vec![0.0; cout], cout, kh, kw, cin }
}

/// Rearranges input windows into the patch matrix `[batch*oh*ow, kh*kw*c]`.
pub fn im2col(
    x: &[f64],
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let cols = kh * kw * c;
    let mut patches = vec![0.0; batch * oh * ow * cols];
    for b in 0..batch {
        for i in 0..oh {
            for j in 0..ow {
                let row = ((b * oh + i) * ow + j) * cols;
                for di in 0..kh {
                    let src = ((b * h + (i * sh + di)) * w + j * sw) * c;
                    let dst = row + di * kw * c;
                    patches[dst..dst + kw * c].copy_from_slice(&x[src..src + kw * c]);
                }
            }
        }
    }
    (patches, oh, ow)
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto the input.
fn col2im(
    dpatches: &[f64],
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Vec<f64> {
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let cols = kh * kw * c;
    let mut dx = vec![0.0; batch * h * w * c];
    for b in 0..batch {
        for i in 0..oh {
            for j in 0..ow {
                let row = ((b * oh + i) * ow + j) * cols;
                for di in 0..kh {
                    let src = row + di * kw * c;
                    let dst = ((b * h + (i * sh + di)) * w + j * sw) * c;
                    for k in 0..kw * c {
                        dx[dst + k] += dpatches[src + k];
                    }
                }
            }
        }
    }
    dx
}

/// Vectorizes kernels `[cout, kh, kw, cin]` into the `[kh*kw*cin, cout]`
/// weight matrix so convolution becomes one matrix product.
pub fn kernel_matrix(kernels: &[f64], cout: usize, kh: usize, kw: usize, cin: usize) -> Vec<f64> {
    let cols = kh * kw * cin;
    let mut wm = vec![0.0; cols * cout];
    for co in 0..cout {
        for p in 0..cols {
            wm[p * cout + co] = kernels[co * cols + p];
        }
    }
    wm
}

fn scatter_kernel_matrix(dwm: &[f64], dk: &mut [f64], cout: usize, kh: usize, kw: usize, cin: usize) {
    let cols = kh * kw * cin;
    for co in 0..cout {
        for p in 0..cols {
            dk[co * cols + p] += dwm[p * cout + co];
        }
    }
}

fn maxpool_batch(
    x: &[f64],
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    wh: usize,
    ww: usize,
) -> (Vec<f64>, Vec<usize>) {
    let oh = h / wh;
    let ow = w / ww;
    let mut out = vec![0.0; batch * oh * ow * c];
    let mut argmax = vec![0usize; out.len()];
    for b in 0..batch {
        for i in 0..oh {
            for j in 0..ow {
                for k in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for di in 0..wh {
                        for dj in 0..ww {
                            let src = ((b * h + i * wh + di) * w + j * ww + dj) * c + k;
                            if x[src] > best {
                                best = x[src];
                                best_idx = src;
                            }
                        }
                    }
                    let dst = ((b * oh + i) * ow + j) * c + k;
                    out[dst] = best;
                    argmax[dst] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

/// Valid-mode convolution of a single `[h, w, cin]` input, returning the
/// activated `[oh, ow, cout]` feature map.
///
/// Evaluated as the direct triple sum over kernel cells; [`conv_as_affine`]
/// is the independent matrix-product route of the same map, and the two are
/// held to exact agreement by the acceptance suite.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernels: &[f64],
    cout: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
    stride: (usize, usize),
    activation: Activation,
) -> Result<(Vec<f64>, usize, usize)> {
    if kh > h || kw > w || kh == 0 || kw == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::shape(
            "conv2d_forward",
            format!("kernel {kh}x{kw} against input {h}x{w}"),
        ));
    }
    if input.len() != h * w * cin || kernels.len() != cout * kh * kw * cin || bias.len() != cout {
        return Err(Error::shape("conv2d_forward", "buffer lengths disagree with extents"));
    }
    let oh = (h - kh) / stride.0 + 1;
    let ow = (w - kw) / stride.1 + 1;
    let mut out = vec![0.0; oh * ow * cout];
    for m in 0..oh {
        for r in 0..ow {
            for c in 0..cout {
                let mut acc = bias[c];
                for i in 0..kh {
                    for j in 0..kw {
                        for k in 0..cin {
                            acc += kernels[((c * kh + i) * kw + j) * cin + k]
                                * input[((m * stride.0 + i) * w + (r * stride.1 + j)) * cin + k];
                        }
                    }
                }
                out[(m * ow + r) * cout + c] = acc;
            }
        }
    }
    activation.apply(&mut out, cout);
    Ok((out, oh, ow))
}

/// The convolution-as-affine-map decomposition: returns the patch matrix
/// `[oh*ow, kh*kw*cin]`, the vectorized kernel matrix `[kh*kw*cin, cout]`,
/// and their product (the pre-activation output) plus output extents.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn conv_as_affine(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernels: &[f64],
    cout: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
    stride: (usize, usize),
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, usize, usize)> {
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::shape(
            "conv_as_affine",
            format!("kernel {kh}x{kw} against input {h}x{w}"),
        ));
    }
    if input.len() != h * w * cin || kernels.len() != cout * kh * kw * cin || bias.len() != cout {
        return Err(Error::shape("conv_as_affine", "buffer lengths disagree with extents"));
    }
    let (patches, oh, ow) = im2col(input, 1, h, w, cin, kh, kw, stride.0, stride.1);
    let wm = kernel_matrix(kernels, cout, kh, kw, cin);
    let rows = oh * ow;
    let mut pre = vec![0.0; rows * cout];
    matmul(rows, kh * kw * cin, cout, &patches, &wm, &mut pre);
    for r in 0..rows {
        for (o, bv) in pre[r * cout..(r + 1) * cout].iter_mut().zip(bias.iter()) {
            *o += bv;
        }
    }
    Ok((patches, wm, pre, oh, ow))
}

/// Single `[oh, ow, c]`-style max pool over one input; window must be
/// non-zero. Returns the pooled values.
pub fn maxpool_forward(input: &[f64], h: usize, w: usize, c: usize, window: (usize, usize)) -> Result<Vec<f64>> {
    if window.0 == 0 || window.1 == 0 {
        return Err(Error::shape("maxpool_forward", "zero-extent window"));
    }
    if h / window.0 == 0 || w / window.1 == 0 {
        return Err(Error::shape(
            "maxpool_forward",
            format!("window {window:?} larger than input {h}x{w}"),
        ));
    }
    let (out, _) = maxpool_batch(input, 1, h, w, c, window.0, window.1);
    Ok(out)
}

/// Dense layer on a single vector: `activation(W x + b)`.
pub fn dense_forward(
    input: &[f64],
    w: &[f64],
    b: &[f64],
    kout: usize,
    activation: Activation,
) -> Result<Vec<f64>> {
    let kin = input.len();
    if w.len() != kout * kin || b.len() != kout {
        return Err(Error::shape(
            "dense_forward",
            format!("W is {}, wanted {kout}x{kin}", w.len()),
        ));
    }
    let mut out = b.to_vec();
    for r in 0..kout {
        out[r] += crate::tensor::dot(&w[r * kin..(r + 1) * kin], input);
    }
    activation.apply(&mut out, kout);
    Ok(out)
}

/// Inverted dropout: `input * mask / (1 - rate)`, identical in training and
/// MC prediction.
pub fn apply_dropout(input: &[f64], mask: &[f64], rate: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    if input.len() != mask.len() {
        return Err(Error::shape(
            "apply_dropout",
            format!("input len {} vs mask len {}", input.len(), mask.len()),
        ));
    }
    let scale = 1.0 / (1.0 - rate);
    Ok(input.iter().zip(mask).map(|(v, m)| v * m * scale).collect())
}
