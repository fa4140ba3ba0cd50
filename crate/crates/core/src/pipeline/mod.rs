//! End-to-end orchestration: fit the dropout network, extract MC features,
//! fit the per-draw GLM ensemble, and predict on new rows. Shared by the CLI
//! and the acceptance suite.

pub mod dataset;
pub mod experiment;
pub mod persist;

pub use dataset::{simulate_dataset, SimDesign, SimulatedDataset};
pub use experiment::{
    aggregate_csv, render_experiment_table, replicates_csv, run_experiment, Aggregate,
    ExperimentOptions, ExperimentReport, ReplicateOutcome,
};
pub use persist::{load_model, save_model, LoadedModel, RunManifest};

use crate::ensemble::{
    metrics, posterior_summary, predictive_linear, sample_response, sigma_hat_sq,
    CoefficientSummary, EnsemblePosterior, MetricsReport, PredictiveSummary,
};
use crate::error::{Error, Result};
use crate::glm::{irls_fit, laplace_posterior, GaussianPosterior, GlmDataset, GlmFamily};
use crate::mc_dropout::{mc_features, FeatureDraws};
use crate::nn::{
    train, Activation, AdamHyper, LayerSpec, LossKind, NetworkConfig, TrainedNetwork,
};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of MC dropout draws (M).
    pub draws: usize,
    pub seed: u64,
    /// Worker threads for the draw/GLM fan-out; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Replaces every dropout rate in the config when set.
    pub dropout_override: Option<f64>,
    /// Mixture draws behind each coefficient HPD interval.
    pub hpd_draws: usize,
    /// Response draws behind each per-row predictive HPD interval.
    pub predictive_draws: usize,
    pub level: f64,
    /// Abort when more than this fraction of per-draw GLM fits fail.
    pub max_failure_fraction: f64,
    /// A draw whose Laplace posterior has a marginal coefficient variance
    /// above this is degenerate and dropped like any other per-draw failure.
    /// Off by default: a unit dropped for the whole draw has an unidentified
    /// (ridge-pinned) coefficient, but its feature column is zero under the
    /// shared mask, so it never reaches a prediction.
    pub max_coef_variance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            draws: 300,
            seed: 0,
            workers: None,
            dropout_override: None,
            hpd_draws: 10_000,
            predictive_draws: 10_000,
            level: 0.95,
            max_failure_fraction: 0.1,
            max_coef_variance: f64::INFINITY,
        }
    }
}

/// Everything produced by one fit.
#[derive(Debug)]
pub struct FittedModel {
    pub trained: TrainedNetwork,
    pub ensemble: EnsemblePosterior,
    pub family: GlmFamily,
    /// Pooled residual variance across draws (Gaussian family; 0 otherwise).
    pub sigma2: f64,
    pub coefficients: Vec<CoefficientSummary>,
    pub feature_draws: FeatureDraws,
    /// Original draw index behind each ensemble component (failed draws are
    /// dropped, so this can be shorter than `draws`). Prediction re-creates
    /// exactly these masks: the mask is part of the m-th weight sample, so
    /// component m must see features from the same mask on new rows.
    pub kept_draws: Vec<usize>,
    pub glm_failures: usize,
    pub ridged_draws: usize,
    pub seed: u64,
    pub z_width: usize,
}

impl FittedModel {
    /// Names for the design columns: covariates first, then features.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.z_width).map(|j| format!("z{j}")).collect();
        names.extend((1..=self.trained.feature_dim()).map(|j| format!("phi{j}")));
        names
    }

    /// Posterior summaries of the covariate coefficients only.
    pub fn gamma_summaries(&self) -> &[CoefficientSummary] {
        &self.coefficients[..self.z_width]
    }
}

/// The loss each response family trains under.
pub fn loss_for_family(family: GlmFamily) -> LossKind {
    match family {
        GlmFamily::Gaussian => LossKind::Mse,
        GlmFamily::Bernoulli => LossKind::Bce,
        GlmFamily::Poisson => LossKind::Poisson,
    }
}

fn check_family_loss(config: &NetworkConfig, family: GlmFamily) -> Result<()> {
    let expected = loss_for_family(family);
    if config.loss != expected {
        return Err(Error::InvalidConfig(format!(
            "loss {} does not match family {} (expected {})",
            config.loss.name(),
            family.name(),
            expected.name()
        )));
    }
    Ok(())
}

fn apply_dropout_override(config: &mut NetworkConfig, rate: Option<f64>) -> Result<()> {
    if let Some(r) = rate {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidRate(r));
        }
        for layer in config.layers.iter_mut() {
            if let LayerSpec::Dropout { rate } = layer {
                *rate = r;
            }
        }
    }
    Ok(())
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Builds the per-draw design matrix `[Z, Phi^(m)]` (covariates first).
fn stack_design(z: Option<&Tensor>, phi: &[f64], n: usize, k: usize) -> Vec<f64> {
    let p = z.map_or(0, |t| t.shape()[1]);
    let q = p + k;
    let mut design = vec![0.0; n * q];
    for i in 0..n {
        if let Some(zt) = z {
            design[i * q..i * q + p].copy_from_slice(zt.slice(i));
        }
        design[i * q + p..(i + 1) * q].copy_from_slice(&phi[i * k..(i + 1) * k]);
    }
    design
}

/// Trains the network, draws MC features, fits one GLM per draw through the
/// Laplace approximation, and aggregates the ensemble posterior.
///
/// Per-draw GLM failures are dropped and counted; the fit aborts when more
/// than `max_failure_fraction` of the draws fail.
pub fn fit_bayescglm(
    mut config: NetworkConfig,
    x: &Tensor,
    z: Option<&Tensor>,
    y: &Tensor,
    family: GlmFamily,
    opts: &FitOptions,
) -> Result<FittedModel> {
    apply_dropout_override(&mut config, opts.dropout_override)?;
    check_family_loss(&config, family)?;
    let rng = SeededRng::new(opts.seed);
    let z_width = z.map_or(0, |t| t.shape()[1]);

    let trained = train(config, x, z, y, &rng)?;
    let (draws, fits) = in_pool(opts.workers, || -> Result<_> {
        let draws = mc_features(&trained, x, z, opts.draws, &rng)?;
        let n = draws.n;
        let k = draws.feature_dim;
        let fits: Vec<std::result::Result<(GaussianPosterior, Vec<f64>, f64), String>> = draws
            .features
            .par_iter()
            .map(|phi| {
                let design = stack_design(z, phi, n, k);
                let data =
                    GlmDataset::new(design, n, z_width + k, y.data().to_vec(), family)
                        .map_err(|e| e.to_string())?;
                let fit = irls_fit(&data).map_err(|e| e.to_string())?;
                let mut fitted = vec![0.0; n];
                data.linear_predictor(&fit.beta, &mut fitted);
                let post =
                    laplace_posterior(&fit.beta, &fit.fisher).map_err(|e| e.to_string())?;
                let worst = post.marginal_sd().iter().fold(0.0f64, |m, s| m.max(s * s));
                if worst > opts.max_coef_variance {
                    return Err(format!("degenerate posterior (marginal variance {worst:.3e})"));
                }
                Ok((post, fitted, fit.ridge))
            })
            .collect();
        Ok((draws, fits))
    })?;

    let mut components = Vec::new();
    let mut fitted_per_draw = Vec::new();
    let mut kept_draws = Vec::new();
    let mut ridged_draws = 0usize;
    let mut failures = 0usize;
    for (draw, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok((post, fitted, ridge)) => {
                components.push(post);
                fitted_per_draw.push(fitted);
                kept_draws.push(draw);
                if ridge > 0.0 {
                    ridged_draws += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > opts.max_failure_fraction * opts.draws as f64 {
        return Err(Error::TooManyGlmFailures {
            failed: failures,
            draws: opts.draws,
            limit: (opts.max_failure_fraction * opts.draws as f64) as usize,
        });
    }
    let ensemble = EnsemblePosterior::new(components)?;
    let sigma2 = match family {
        GlmFamily::Gaussian => sigma_hat_sq(&fitted_per_draw, y.data()),
        _ => 0.0,
    };
    let coefficients =
        posterior_summary(&ensemble, opts.level, opts.hpd_draws, &mut rng.stream("hpd", 0))?;

    Ok(FittedModel {
        trained,
        ensemble,
        family,
        sigma2,
        coefficients,
        feature_draws: draws,
        kept_draws,
        glm_failures: failures,
        ridged_draws,
        seed: opts.seed,
        z_width,
    })
}

/// Borrowed view of a model, enough to predict on new rows.
#[derive(Clone, Copy)]
pub struct ModelView<'a> {
    pub trained: &'a TrainedNetwork,
    pub ensemble: &'a EnsemblePosterior,
    pub kept_draws: &'a [usize],
    /// Seed the fit ran under; prediction re-derives the per-draw masks
    /// from it.
    pub mask_seed: u64,
    pub family: GlmFamily,
    pub sigma2: f64,
}

impl FittedModel {
    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            trained: &self.trained,
            ensemble: &self.ensemble,
            kept_draws: &self.kept_draws,
            mask_seed: self.seed,
            family: self.family,
            sigma2: self.sigma2,
        }
    }
}

/// Predictive summaries for new rows.
///
/// Component m's dropout masks are re-created from the fit's substreams, so
/// the m-th feature matrix on new rows comes from the same weight sample the
/// m-th GLM was fitted under; the per-row linear-predictor mixture is then
/// sampled through the response family.
pub fn predict_rows(
    model: &ModelView<'_>,
    x: &Tensor,
    z: Option<&Tensor>,
    opts: &FitOptions,
) -> Result<Vec<PredictiveSummary>> {
    let n = x.outer();
    if n == 0 {
        return Err(Error::shape("predict_rows", "no rows to predict"));
    }
    let network = &model.trained.network;
    if x.inner_len() != network.input_len() {
        return Err(Error::shape(
            "predict_rows",
            format!("row length {} vs network input {}", x.inner_len(), network.input_len()),
        ));
    }
    if model.kept_draws.len() != model.ensemble.m() {
        return Err(Error::DimensionMismatch(model.kept_draws.len(), model.ensemble.m()));
    }
    let zdata = z.map(|t| t.data());
    let k = network.feature_dim();
    let mask_rng = SeededRng::new(model.mask_seed);

    let designs: Result<Vec<Vec<f64>>> = in_pool(opts.workers, || {
        model
            .kept_draws
            .par_iter()
            .map(|&draw| {
                let masks = network.draw_masks(&mut mask_rng.stream("mc-mask", draw as u64));
                let fwd = network.forward(x.data(), n, zdata, Some(&masks), false)?;
                Ok(stack_design(z, &fwd.features, n, k))
            })
            .collect()
    });
    let mixture = predictive_linear(&model.ensemble.components, &designs?, n)?;
    sample_response(
        model.family,
        &mixture,
        model.sigma2,
        opts.level,
        opts.predictive_draws,
        &mut SeededRng::new(opts.seed).stream("predict-draws", 0),
    )
}

/// Classical GLM on the covariates alone (intercept plus `Z`), the baseline
/// the ensemble is compared against.
#[derive(Debug, Clone)]
pub struct BaselineGlm {
    pub gamma: Vec<f64>,
    pub gamma_sd: Vec<f64>,
    pub dispersion: f64,
    pub family: GlmFamily,
    beta: Vec<f64>,
}

pub fn fit_baseline_glm(z: &Tensor, y: &Tensor, family: GlmFamily) -> Result<BaselineGlm> {
    let n = z.outer();
    let p = z.shape()[1];
    let mut design = vec![0.0; n * (p + 1)];
    for i in 0..n {
        design[i * (p + 1)] = 1.0;
        design[i * (p + 1) + 1..(i + 1) * (p + 1)].copy_from_slice(z.slice(i));
    }
    let data = GlmDataset::new(design, n, p + 1, y.data().to_vec(), family)?;
    let fit = irls_fit(&data)?;
    let post = laplace_posterior(&fit.beta, &fit.fisher)?;
    let sd = post.marginal_sd();
    Ok(BaselineGlm {
        gamma: fit.beta[1..].to_vec(),
        gamma_sd: sd[1..].to_vec(),
        dispersion: fit.dispersion,
        family,
        beta: fit.beta,
    })
}

impl BaselineGlm {
    /// Point predictions on new covariate rows.
    pub fn predict(&self, z: &Tensor) -> Vec<f64> {
        let p = z.shape()[1];
        (0..z.outer())
            .map(|i| {
                let eta = self.beta[0] + crate::tensor::dot(z.slice(i), &self.beta[1..=p]);
                self.family.inverse_link(eta)
            })
            .collect()
    }

    /// Wald intervals at `level` for the covariate coefficients.
    pub fn gamma_intervals(&self, level: f64) -> Vec<(f64, f64)> {
        let zq = normal_quantile(0.5 + level / 2.0);
        self.gamma
            .iter()
            .zip(&self.gamma_sd)
            .map(|(g, s)| (g - zq * s, g + zq * s))
            .collect()
    }
}

/// Inverse standard-normal CDF (Acklam's rational approximation, good to
/// ~1e-9 over (0,1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Default desk-scale network configurations for the synthetic experiments.
/// Reduced channel counts and epochs keep a full experiment run on a single
/// core in the minutes range.
pub fn default_config(family: GlmFamily, design: SimDesign) -> NetworkConfig {
    match design {
        SimDesign::SimpleNn => NetworkConfig {
            layers: vec![
                LayerSpec::Dense { width: 3, activation: Activation::TanH },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Concatenate,
                LayerSpec::Dense { width: 1, activation: Activation::Linear },
            ],
            loss: LossKind::Mse,
            optimizer: AdamHyper { learning_rate: 1e-2, ..AdamHyper::default() },
            batch_size: 10,
            epochs: 40,
            patience: 20,
            validation_fraction: 0.1,
        },
        SimDesign::Lattice => {
            let (out_act, loss, lr, epochs, patience) = match family {
                GlmFamily::Gaussian => (Activation::Linear, LossKind::Mse, 1e-3, 15, 5),
                GlmFamily::Bernoulli => (Activation::Sigmoid, LossKind::Bce, 1e-3, 15, 5),
                GlmFamily::Poisson => (Activation::Exponential, LossKind::Poisson, 1e-3, 5, 3),
            };
            NetworkConfig {
                layers: vec![
                    LayerSpec::Conv2D {
                        channels: 6,
                        kernel: (5, 5),
                        stride: (2, 2),
                        activation: Activation::TanH,
                    },
                    LayerSpec::Dropout { rate: 0.2 },
                    LayerSpec::MaxPool { window: (2, 2) },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 8, activation: Activation::TanH },
                    LayerSpec::Dropout { rate: 0.2 },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: out_act },
                ],
                loss,
                optimizer: AdamHyper { learning_rate: lr, ..AdamHyper::default() },
                batch_size: 32,
                epochs,
                patience,
                validation_fraction: 0.1,
            }
        }
    }
}

/// Prediction metrics of a fitted model on held-out rows.
pub fn evaluate_on(
    model: &FittedModel,
    x: &Tensor,
    z: Option<&Tensor>,
    y: &Tensor,
    opts: &FitOptions,
) -> Result<(Vec<PredictiveSummary>, MetricsReport)> {
    let summaries = predict_rows(&model.view(), x, z, opts)?;
    let report = metrics(y.data(), &summaries, model.family)?;
    Ok((summaries, report))
}
