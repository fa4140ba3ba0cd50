//! Model persistence and run manifests.
//!
//! A model directory is self-describing:
//!
//! ```text
//! model.json           family, sigma2, ensemble size, failure counts
//! config.txt           network configuration (text format)
//! net/manifest.json    input shape, covariate width, training log
//! net/layer_##_*.bct   parameter tensors
//! ensemble/means.bct        [m, q]
//! ensemble/precisions.bct   [m, q, q]
//! features/            training-time MC feature draws
//! run_manifest.json    everything needed to reproduce the run
//! ```

use super::FittedModel;
use crate::ensemble::EnsemblePosterior;
use crate::error::{Error, Result};
use crate::glm::{laplace_posterior, GlmFamily};
use crate::nn::{config_text, LayerParams, Network, TrainedNetwork, TrainingLog};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: e }
}

fn json_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.display().to_string(), detail: e.to_string() }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// Everything needed to reproduce a run byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub family: String,
    pub draws: usize,
    pub config_path: Option<String>,
    pub dataset_paths: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub out_dir: String,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run_manifest.json"), self)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    family: String,
    sigma2: f64,
    m: usize,
    q: usize,
    feature_dim: usize,
    z_width: usize,
    seed: u64,
    kept_draws: Vec<usize>,
    glm_failures: usize,
    ridged_draws: usize,
    tool_version: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetManifest {
    config_text: String,
    input_shape: Vec<usize>,
    z_width: usize,
    log: TrainingLog,
}

fn layer_file(idx: usize, part: &str) -> String {
    format!("layer_{idx:02}_{part}.bct")
}

fn save_network(dir: &Path, trained: &TrainedNetwork) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let net = &trained.network;
    let manifest = NetManifest {
        config_text: config_text::to_text(&net.config),
        input_shape: net.input_shape.clone(),
        z_width: net.z_width,
        log: trained.log.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for (idx, p) in net.params.iter().enumerate() {
        match p {
            LayerParams::Conv { kernels, bias, cout, kh, kw, cin } => {
                let kt = Tensor::new(vec![*cout, *kh, *kw, *cin], kernels.clone())?;
                crate::io::write_tensor(&dir.join(layer_file(idx, "kernels")), &kt)?;
                let bt = Tensor::new(vec![*cout], bias.clone())?;
                crate::io::write_tensor(&dir.join(layer_file(idx, "bias")), &bt)?;
            }
            LayerParams::Dense { w, b, kout, kin } => {
                let wt = Tensor::new(vec![*kout, *kin], w.clone())?;
                crate::io::write_tensor(&dir.join(layer_file(idx, "w")), &wt)?;
                let bt = Tensor::new(vec![*kout], b.clone())?;
                crate::io::write_tensor(&dir.join(layer_file(idx, "b")), &bt)?;
            }
            LayerParams::Empty => {}
        }
    }
    Ok(())
}

fn load_network(dir: &Path) -> Result<TrainedNetwork> {
    let manifest: NetManifest = read_json(&dir.join("manifest.json"))?;
    let config = config_text::parse_config(&manifest.config_text)?;
    let mut params = Vec::with_capacity(config.layers.len());
    for (idx, layer) in config.layers.iter().enumerate() {
        use crate::nn::LayerSpec;
        let p = match layer {
            LayerSpec::Conv2D { .. } | LayerSpec::Conv1D { .. } => {
                let kt = crate::io::read_tensor(&dir.join(layer_file(idx, "kernels")))?;
                let bt = crate::io::read_tensor(&dir.join(layer_file(idx, "bias")))?;
                let s = kt.shape().to_vec();
                LayerParams::Conv {
                    kernels: kt.into_data(),
                    bias: bt.into_data(),
                    cout: s[0],
                    kh: s[1],
                    kw: s[2],
                    cin: s[3],
                }
            }
            LayerSpec::Dense { .. } => {
                let wt = crate::io::read_tensor(&dir.join(layer_file(idx, "w")))?;
                let bt = crate::io::read_tensor(&dir.join(layer_file(idx, "b")))?;
                let s = wt.shape().to_vec();
                LayerParams::Dense { w: wt.into_data(), b: bt.into_data(), kout: s[0], kin: s[1] }
            }
            _ => LayerParams::Empty,
        };
        params.push(p);
    }
    let network = Network::with_params(config, &manifest.input_shape, manifest.z_width, params)?;
    Ok(TrainedNetwork { network, log: manifest.log })
}

/// Persists the full fit (network, ensemble, feature draws, metadata).
pub fn save_model(dir: &Path, model: &FittedModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = ModelMeta {
        family: model.family.name().to_string(),
        sigma2: model.sigma2,
        m: model.ensemble.m(),
        q: model.ensemble.dim(),
        feature_dim: model.trained.feature_dim(),
        z_width: model.z_width,
        seed: model.seed,
        kept_draws: model.kept_draws.clone(),
        glm_failures: model.glm_failures,
        ridged_draws: model.ridged_draws,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&dir.join("model.json"), &meta)?;
    std::fs::write(dir.join("config.txt"), config_text::to_text(&model.trained.network.config))
        .map_err(|e| io_err(&dir.join("config.txt"), e))?;
    save_network(&dir.join("net"), &model.trained)?;

    let m = model.ensemble.m();
    let q = model.ensemble.dim();
    let mut means = vec![0.0; m * q];
    let mut precisions = vec![0.0; m * q * q];
    for (i, c) in model.ensemble.components.iter().enumerate() {
        means[i * q..(i + 1) * q].copy_from_slice(&c.mean);
        precisions[i * q * q..(i + 1) * q * q].copy_from_slice(&c.precision);
    }
    let edir = dir.join("ensemble");
    std::fs::create_dir_all(&edir).map_err(|e| io_err(&edir, e))?;
    crate::io::write_tensor(&edir.join("means.bct"), &Tensor::new(vec![m, q], means)?)?;
    crate::io::write_tensor(
        &edir.join("precisions.bct"),
        &Tensor::new(vec![m, q, q], precisions)?,
    )?;
    crate::mc_dropout::save_feature_draws(&dir.join("features"), &model.feature_draws)
}

/// A model loaded back from disk; enough to predict on new rows.
#[derive(Debug)]
pub struct LoadedModel {
    pub trained: TrainedNetwork,
    pub ensemble: EnsemblePosterior,
    pub family: GlmFamily,
    pub sigma2: f64,
    pub z_width: usize,
    pub seed: u64,
    pub kept_draws: Vec<usize>,
}

impl LoadedModel {
    pub fn view(&self) -> super::ModelView<'_> {
        super::ModelView {
            trained: &self.trained,
            ensemble: &self.ensemble,
            kept_draws: &self.kept_draws,
            mask_seed: self.seed,
            family: self.family,
            sigma2: self.sigma2,
        }
    }
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let meta: ModelMeta = read_json(&dir.join("model.json"))?;
    let family = GlmFamily::parse(&meta.family)
        .ok_or_else(|| json_err(&dir.join("model.json"), format!("bad family {}", meta.family)))?;
    let trained = load_network(&dir.join("net"))?;
    let means = crate::io::read_tensor(&dir.join("ensemble/means.bct"))?;
    let precisions = crate::io::read_tensor(&dir.join("ensemble/precisions.bct"))?;
    let (m, q) = (meta.m, meta.q);
    if means.shape() != [m, q] || precisions.shape() != [m, q, q] {
        return Err(Error::shape(
            "load_model",
            format!("ensemble tensors {:?} / {:?}", means.shape(), precisions.shape()),
        ));
    }
    let mut components = Vec::with_capacity(m);
    for i in 0..m {
        let mean = &means.data()[i * q..(i + 1) * q];
        let prec = &precisions.data()[i * q * q..(i + 1) * q * q];
        components.push(laplace_posterior(mean, prec)?);
    }
    Ok(LoadedModel {
        trained,
        ensemble: EnsemblePosterior::new(components)?,
        family,
        sigma2: meta.sigma2,
        z_width: meta.z_width,
        seed: meta.seed,
        kept_draws: meta.kept_draws,
    })
}
