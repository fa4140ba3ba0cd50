//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS/FAIL line with the measured quantities (run with
//! `cargo test --test acceptance -- --show-output` to see them all).

use bayescglm_core::ensemble::{equal_tailed_interval, hpd_interval};
use bayescglm_core::glm::{irls_fit, laplace_posterior, mcmc_oracle, GlmDataset, GlmFamily};
use bayescglm_core::mc_dropout::{effective_weight_decay, elbo_vs_dropout_loss, VariationalSpec};
use bayescglm_core::nn::{
    conv2d_forward, conv_as_affine, loss_eval, loss_grad, Activation, AdamHyper, LayerSpec,
    LossKind, Network, NetworkConfig,
};
use bayescglm_core::pipeline::{
    run_experiment, ExperimentOptions, ExperimentReport, SimDesign,
};
use bayescglm_core::rng::{draw_normal, SeededRng};
use bayescglm_core::simulate::{matern_cov, sample_gp_images, MaternParams};
use std::sync::OnceLock;
use std::time::Instant;

const ACCEPTANCE_SEED: u64 = 1;

fn pass(criterion: &str, detail: String) {
    println!("[acceptance] {criterion}: PASS - {detail}");
}

/// Criterion 1: over 200 random configurations the direct convolution and
/// its patch-matrix-times-kernel-matrix form agree to 1e-12 pre-activation.
#[test]
fn criterion_01_convolution_affine_equivalence() {
    let start = Instant::now();
    let rng = SeededRng::new(301);
    let mut worst = 0.0f64;
    for t in 0..200u64 {
        let mut s = rng.stream("conv-affine", t);
        let h = 3 + s.index(10);
        let w = 3 + s.index(10);
        let cin = 1 + s.index(3);
        let cout = 1 + s.index(4);
        let kh = 1 + s.index(h.min(4));
        let kw = 1 + s.index(w.min(4));
        let sh = 1 + s.index(3);
        let sw = 1 + s.index(3);
        let mut input = vec![0.0; h * w * cin];
        s.fill_standard_normal(&mut input);
        let mut kernels = vec![0.0; cout * kh * kw * cin];
        s.fill_standard_normal(&mut kernels);
        let mut bias = vec![0.0; cout];
        s.fill_standard_normal(&mut bias);

        let (direct, oh, ow) = conv2d_forward(
            &input, h, w, cin, &kernels, cout, kh, kw, &bias, (sh, sw), Activation::Linear,
        )
        .unwrap();
        let (_, _, affine, oh2, ow2) =
            conv_as_affine(&input, h, w, cin, &kernels, cout, kh, kw, &bias, (sh, sw)).unwrap();
        assert_eq!((oh, ow), (oh2, ow2));
        for (a, b) in direct.iter().zip(&affine) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-12, "max abs difference {worst:e}");
    assert!(elapsed < 10.0, "took {elapsed:.1}s");
    pass("criterion 01 conv/affine equivalence", format!("200 configs, max abs diff {worst:.2e}, {elapsed:.2}s"));
}

struct GradCase {
    name: &'static str,
    config: NetworkConfig,
    input_shape: Vec<usize>,
    z_width: usize,
}

fn grad_cases() -> Vec<GradCase> {
    let opt = AdamHyper::default();
    let base = |layers: Vec<LayerSpec>, loss: LossKind| NetworkConfig {
        layers,
        loss,
        optimizer: opt,
        batch_size: 4,
        epochs: 1,
        patience: 1,
        validation_fraction: 0.0,
    };
    vec![
        GradCase {
            name: "conv2d tanh + pool + dense softplus, squared error",
            config: base(
                vec![
                    LayerSpec::Conv2D { channels: 2, kernel: (3, 3), stride: (1, 1), activation: Activation::TanH },
                    LayerSpec::Dropout { rate: 0.2 },
                    LayerSpec::MaxPool { window: (2, 2) },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 5, activation: Activation::Softplus },
                    LayerSpec::Dropout { rate: 0.25 },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: Activation::Linear },
                ],
                LossKind::Mse,
            ),
            input_shape: vec![6, 6, 1],
            z_width: 2,
        },
        GradCase {
            name: "conv2d softmax + dense sigmoid, cross entropy",
            config: base(
                vec![
                    LayerSpec::Conv2D { channels: 3, kernel: (2, 2), stride: (2, 2), activation: Activation::Softmax },
                    LayerSpec::Dropout { rate: 0.3 },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 4, activation: Activation::Sigmoid },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: Activation::Sigmoid },
                ],
                LossKind::Bce,
            ),
            input_shape: vec![6, 6, 1],
            z_width: 2,
        },
        GradCase {
            name: "conv1d tanh + pool + dense softplus, count loss",
            config: base(
                vec![
                    LayerSpec::Conv1D { channels: 3, kernel: 4, stride: 2, activation: Activation::TanH },
                    LayerSpec::Dropout { rate: 0.2 },
                    LayerSpec::MaxPool { window: (2, 2) },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 5, activation: Activation::Softplus },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: Activation::Exponential },
                ],
                LossKind::Poisson,
            ),
            input_shape: vec![15, 1, 1],
            z_width: 2,
        },
        GradCase {
            name: "dense tanh stack, squared error",
            config: base(
                vec![
                    LayerSpec::Dense { width: 6, activation: Activation::TanH },
                    LayerSpec::Dropout { rate: 0.2 },
                    LayerSpec::Dense { width: 4, activation: Activation::TanH },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: Activation::Linear },
                ],
                LossKind::Mse,
            ),
            input_shape: vec![5],
            z_width: 2,
        },
        GradCase {
            name: "relu conv and dense away from the kink, squared error",
            config: base(
                vec![
                    LayerSpec::Conv2D { channels: 2, kernel: (3, 3), stride: (2, 2), activation: Activation::Relu },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 4, activation: Activation::Relu },
                    LayerSpec::Concatenate,
                    LayerSpec::Dense { width: 1, activation: Activation::Linear },
                ],
                LossKind::Mse,
            ),
            input_shape: vec![7, 7, 1],
            z_width: 2,
        },
    ]
}

/// Criterion 2: analytic gradients match central finite differences at
/// relative error < 1e-5 on at least 50 random points per layer/loss case;
/// ReLU cases are evaluated at points bounded away from the kink.
#[test]
fn criterion_02_gradient_finite_difference_oracle() {
    let start = Instant::now();
    let mut total_points = 0usize;
    for (case_idx, case) in grad_cases().into_iter().enumerate() {
        let rng = SeededRng::new(400 + case_idx as u64);
        let mut net = Network::new(
            case.config.clone(),
            &case.input_shape,
            case.z_width,
            &mut rng.stream("init", 0),
        )
        .unwrap();
        let batch = 4;
        let in_len: usize = case.input_shape.iter().product();
        let x = draw_normal(&mut rng.stream("x", 0), &[batch, in_len]);
        let z = draw_normal(&mut rng.stream("z", 0), &[batch, case.z_width]);
        let y: Vec<f64> = match case.config.loss {
            LossKind::Mse => draw_normal(&mut rng.stream("y", 0), &[batch]).into_data(),
            LossKind::Bce => (0..batch).map(|i| (i % 2) as f64).collect(),
            LossKind::Poisson => (0..batch).map(|i| (i % 3) as f64).collect(),
        };
        let masks = net.draw_masks(&mut rng.stream("mask", 0));

        let fwd = net.forward(x.data(), batch, Some(z.data()), Some(&masks), true).unwrap();
        if let Some(margin) = net.min_relu_preactivation(&fwd) {
            assert!(margin > 1e-3, "{}: ReLU margin {margin:e} too close to the kink", case.name);
        }
        let mut dout = vec![0.0; fwd.output.len()];
        loss_grad(case.config.loss, &y, &fwd.output, &mut dout).unwrap();
        let grads = net.backward(&fwd, &dout);

        // probe >= 50 parameter coordinates spread over all buffers
        let coords: Vec<(usize, usize, usize)> = {
            let mut all = Vec::new();
            for li in 0..net.params.len() {
                for (bi, buf) in net.params[li].buffers().iter().enumerate() {
                    for pi in 0..buf.len() {
                        all.push((li, bi, pi));
                    }
                }
            }
            let mut s = rng.stream("coords", 0);
            let mut idx: Vec<usize> = (0..all.len()).collect();
            s.shuffle(&mut idx);
            idx.into_iter().take(60).map(|i| all[i]).collect()
        };
        assert!(coords.len() >= 50, "{}: only {} coordinates", case.name, coords.len());
        total_points += coords.len();

        let h = 1e-6;
        for (li, bi, pi) in coords {
            let orig = net.params[li].buffers()[bi][pi];
            net.params[li].buffers_mut()[bi][pi] = orig + h;
            let up = net.forward(x.data(), batch, Some(z.data()), Some(&masks), false).unwrap();
            let lp = loss_eval(case.config.loss, &y, &up.output).unwrap();
            net.params[li].buffers_mut()[bi][pi] = orig - h;
            let dn = net.forward(x.data(), batch, Some(z.data()), Some(&masks), false).unwrap();
            let lm = loss_eval(case.config.loss, &y, &dn.output).unwrap();
            net.params[li].buffers_mut()[bi][pi] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.per_layer[li].buffers()[bi][pi];
            let denom = fd.abs().max(an.abs()).max(1e-4);
            assert!(
                (fd - an).abs() / denom < 1e-5,
                "{}: layer {li} buffer {bi} param {pi}: analytic {an} vs fd {fd}",
                case.name
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    pass(
        "criterion 02 gradient oracle",
        format!("{total_points} coordinates over 5 layer/loss cases, rel err < 1e-5, {elapsed:.2}s"),
    );
}

/// Criterion 3: with weight decay `p/(2 tau n)` the regularized squared-error
/// loss differs from the scaled negative ELBO by a parameter-independent
/// constant; doubling the decay breaks the identity.
#[test]
fn criterion_03_regularized_loss_matches_scaled_elbo() {
    let rng = SeededRng::new(500);
    let cfg = NetworkConfig {
        layers: vec![
            LayerSpec::Dense { width: 7, activation: Activation::TanH },
            LayerSpec::Dense { width: 5, activation: Activation::TanH },
            LayerSpec::Dense { width: 1, activation: Activation::Linear },
        ],
        loss: LossKind::Mse,
        optimizer: AdamHyper::default(),
        batch_size: 8,
        epochs: 0,
        patience: 1,
        validation_fraction: 0.0,
    };
    let mut net = Network::new(cfg, &[3], 0, &mut rng.stream("init", 0)).unwrap();
    let n = 40;
    let x = draw_normal(&mut rng.stream("x", 0), &[n, 3]);
    let y = draw_normal(&mut rng.stream("y", 0), &[n]).into_data();
    let spec = VariationalSpec { inclusion: vec![0.8, 0.9, 1.0], sigma: 0.05, tau: 1.7, n };
    let matched: Vec<f64> =
        spec.inclusion.iter().map(|&p| effective_weight_decay(p, spec.tau, spec.n)).collect();
    let doubled: Vec<f64> = matched.iter().map(|l| 2.0 * l).collect();

    let variance_of = |lambdas: &[f64], net: &mut Network| -> f64 {
        let mut diffs = Vec::new();
        for trial in 0..10u64 {
            let mut s = rng.stream("theta", trial);
            for p in net.params.iter_mut() {
                for buf in p.buffers_mut() {
                    for v in buf.iter_mut() {
                        *v = 0.5 * s.standard_normal();
                    }
                }
            }
            let cmp = elbo_vs_dropout_loss(net, &x, None, &y, &spec, lambdas, lambdas).unwrap();
            diffs.push(cmp.difference);
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64
    };

    let var_matched = variance_of(&matched, &mut net);
    let var_doubled = variance_of(&doubled, &mut net);
    assert!(var_matched < 1e-10, "matched-decay difference variance {var_matched:e}");
    assert!(var_doubled > 1e-6, "negative control variance {var_doubled:e}");
    pass(
        "criterion 03 loss identity",
        format!("matched variance {var_matched:.2e}, mismatched variance {var_doubled:.2e}"),
    );
}

/// Criterion 4: on a Poisson GLM (n = 500, q = 3) the Laplace posterior
/// matches a long random-walk Metropolis run: means within 3 Monte Carlo
/// standard errors, standard deviations within 10%.
#[test]
fn criterion_04_laplace_matches_mcmc_oracle() {
    let start = Instant::now();
    let rng = SeededRng::new(600);
    let n = 500;
    let q = 3;
    let mut s = rng.stream("design", 0);
    let mut design = vec![0.0; n * q];
    for i in 0..n {
        design[i * q] = 1.0;
        design[i * q + 1] = 0.5 * s.standard_normal();
        design[i * q + 2] = 0.5 * s.standard_normal();
    }
    let beta_true = [0.4, 0.9, -0.6];
    let mut noise = rng.stream("y", 0);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = (0..q).map(|j| design[i * q + j] * beta_true[j]).sum();
            noise.poisson(eta.exp())
        })
        .collect();
    let data = GlmDataset::new(design, n, q, y, GlmFamily::Poisson).unwrap();

    let fit = irls_fit(&data).unwrap();
    let laplace = laplace_posterior(&fit.beta, &fit.fisher).unwrap();
    let laplace_sd = laplace.marginal_sd();

    // near-flat prior so both machines target the same density
    let mcmc =
        mcmc_oracle(&data, 100.0, 10_000, 5_000, &mut rng.stream("mcmc", 0), 1.0).unwrap();
    let mc_mean = mcmc.posterior_mean();
    let mc_sd = mcmc.posterior_sd();
    let mc_se = mcmc.mc_standard_error();

    for j in 0..q {
        let dm = (laplace.mean[j] - mc_mean[j]).abs();
        assert!(
            dm <= 3.0 * mc_se[j],
            "coef {j}: Laplace mean {} vs MCMC {} (3 se = {})",
            laplace.mean[j],
            mc_mean[j],
            3.0 * mc_se[j]
        );
        let rel = (laplace_sd[j] - mc_sd[j]).abs() / mc_sd[j];
        assert!(rel <= 0.10, "coef {j}: sd {} vs {} ({rel:.3} relative)", laplace_sd[j], mc_sd[j]);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.1}s");
    pass(
        "criterion 04 Laplace vs MCMC",
        format!(
            "means within 3 MC-se, sd rel errs {:.3}/{:.3}/{:.3}, acceptance {:.2}, {elapsed:.1}s",
            (laplace_sd[0] - mc_sd[0]).abs() / mc_sd[0],
            (laplace_sd[1] - mc_sd[1]).abs() / mc_sd[1],
            (laplace_sd[2] - mc_sd[2]).abs() / mc_sd[2],
            mcmc.acceptance_rate
        ),
    );
}

fn gaussian_r20() -> &'static ExperimentReport {
    static REPORT: OnceLock<ExperimentReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let mut opts = ExperimentOptions::new(GlmFamily::Gaussian, SimDesign::Lattice);
        opts.replicates = 20;
        opts.n = 1000;
        opts.n_train = 700;
        opts.draws = 50;
        opts.seed = ACCEPTANCE_SEED;
        run_experiment(&opts).expect("gaussian experiment")
    })
}

/// Criterion 5: Gaussian lattice experiment at R = 20, N = 700/300, M = 50 —
/// mean coefficient estimates in [0.90, 1.10], mean RMSPE in [0.95, 1.20],
/// coefficient coverage >= 0.80, prediction coverage in [0.85, 1.00].
#[test]
fn criterion_05_gaussian_lattice_experiment() {
    let start = Instant::now();
    let report = gaussian_r20();
    let agg = report.aggregate();
    assert_eq!(agg.failed, 0, "replicate failures: {:?}",
        report.replicates.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>());
    for j in 0..2 {
        let (mean, _) = agg.gamma_mean[j];
        assert!((0.90..=1.10).contains(&mean), "gamma{} mean {mean}", j + 1);
        assert!(agg.gamma_coverage[j] >= 0.80, "gamma{} coverage {}", j + 1, agg.gamma_coverage[j]);
    }
    let (rmspe, _) = agg.rmspe;
    assert!((0.95..=1.20).contains(&rmspe), "mean RMSPE {rmspe}");
    let cov = agg.prediction_coverage.unwrap();
    assert!((0.85..=1.00).contains(&cov), "prediction coverage {cov}");
    pass(
        "criterion 05 Gaussian simulation",
        format!(
            "gamma ({:.3}, {:.3}), coverage ({:.2}, {:.2}), RMSPE {:.3}, pred coverage {:.3}, {:.0}s wall",
            agg.gamma_mean[0].0,
            agg.gamma_mean[1].0,
            agg.gamma_coverage[0],
            agg.gamma_coverage[1],
            rmspe,
            cov,
            start.elapsed().as_secs_f64(),
        ),
    );
}

/// Criterion 6: binary lattice experiment at R = 10 — mean accuracy >= 0.80,
/// coefficient coverage >= 0.80, covariate-only baseline accuracy <= 0.70.
///
/// The accuracy clauses cannot be met by any method on this generator: the
/// Bayes-optimal classifier on the true linear predictor measures ~0.753,
/// and covariates alone already classify at ~0.70. The test states the
/// thresholds as shipped and reports the measured ceiling next to them.
#[test]
fn criterion_06_binary_lattice_experiment() {
    let mut opts = ExperimentOptions::new(GlmFamily::Bernoulli, SimDesign::Lattice);
    opts.replicates = 10;
    opts.n = 1000;
    opts.n_train = 700;
    opts.draws = 50;
    opts.seed = ACCEPTANCE_SEED;
    let report = run_experiment(&opts).unwrap();
    let agg = report.aggregate();
    assert_eq!(agg.failed, 0);

    // information ceiling of this generator: classify by the true linear
    // predictor on a large fresh sample
    let ceiling = {
        let n = 20_000;
        let ds = bayescglm_core::pipeline::dataset::simulate_dataset(
            GlmFamily::Bernoulli,
            SimDesign::Lattice,
            n,
            n - 1,
            777,
        )
        .unwrap();
        let phi = ds.phi_true.as_ref().unwrap();
        let correct = (0..n)
            .filter(|&i| {
                let lp: f64 = phi.slice(i).iter().sum::<f64>()
                    + ds.z.slice(i)[0]
                    + ds.z.slice(i)[1];
                (lp >= 0.0) == (ds.y.data()[i] > 0.5)
            })
            .count();
        correct as f64 / n as f64
    };

    let acc = agg.accuracy.unwrap().0;
    let base_acc = agg.baseline_accuracy.unwrap().0;
    let gcov = (agg.gamma_coverage[0], agg.gamma_coverage[1]);
    let detail = format!(
        "accuracy {acc:.3} (threshold 0.80; Bayes-optimal ceiling of this generator {ceiling:.3}), \
         gamma coverage ({:.2}, {:.2}), baseline accuracy {base_acc:.3} (threshold 0.70)",
        gcov.0, gcov.1
    );
    assert!(gcov.0 >= 0.80 && gcov.1 >= 0.80, "gamma coverage {gcov:?}");
    assert!(
        acc >= 0.80,
        "[acceptance] criterion 06 binary simulation: FAIL - {detail}"
    );
    assert!(
        base_acc <= 0.70,
        "[acceptance] criterion 06 binary simulation: FAIL - {detail}"
    );
    pass("criterion 06 binary simulation", detail);
}

/// Criterion 7: Poisson lattice experiment at R = 10 — mean coefficient
/// estimates in [0.90, 1.10] and prediction coverage >= 0.85.
#[test]
fn criterion_07_poisson_lattice_experiment() {
    let mut opts = ExperimentOptions::new(GlmFamily::Poisson, SimDesign::Lattice);
    opts.replicates = 10;
    opts.n = 1000;
    opts.n_train = 700;
    opts.draws = 50;
    opts.seed = ACCEPTANCE_SEED;
    let report = run_experiment(&opts).unwrap();
    let agg = report.aggregate();
    assert_eq!(agg.failed, 0, "replicate failures: {:?}",
        report.replicates.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>());
    for j in 0..2 {
        let (mean, _) = agg.gamma_mean[j];
        assert!((0.90..=1.10).contains(&mean), "gamma{} mean {mean}", j + 1);
    }
    let cov = agg.prediction_coverage.unwrap();
    assert!(cov >= 0.85, "prediction coverage {cov}");
    pass(
        "criterion 07 Poisson simulation",
        format!(
            "gamma ({:.3}, {:.3}), prediction coverage {:.3}, RMSPE {:.2} vs baseline {:.2}",
            agg.gamma_mean[0].0, agg.gamma_mean[1].0, cov, agg.rmspe.0, agg.baseline_rmspe.0
        ),
    );
}

/// Criterion 8: the ensemble beats the covariate-only GLM on RMSPE in at
/// least 9 of the first 10 Gaussian replicates.
#[test]
fn criterion_08_ensemble_beats_covariate_only_baseline() {
    let report = gaussian_r20();
    let wins = report
        .replicates
        .iter()
        .take(10)
        .filter(|r| r.error.is_none() && r.metrics.rmspe < r.baseline_metrics.rmspe)
        .count();
    assert!(wins >= 9, "ensemble RMSPE wins in {wins} of 10 replicates");
    pass("criterion 08 baseline ordering", format!("RMSPE wins in {wins} of 10 replicates"));
}

/// Criterion 9: dense-only pipeline on the two-layer tanh generator at
/// R = 10 — mean gamma1 in [0.9, 1.1], gamma2 in [1.85, 2.15], coverage
/// >= 0.80 for the coefficients and the predictions.
#[test]
fn criterion_09_dense_pipeline_recovers_coefficients() {
    let mut opts = ExperimentOptions::new(GlmFamily::Gaussian, SimDesign::SimpleNn);
    opts.replicates = 10;
    opts.n = 600;
    opts.n_train = 500;
    opts.draws = 50;
    opts.seed = ACCEPTANCE_SEED;
    let report = run_experiment(&opts).unwrap();
    let agg = report.aggregate();
    assert_eq!(agg.failed, 0);
    let g1 = agg.gamma_mean[0].0;
    let g2 = agg.gamma_mean[1].0;
    assert!((0.9..=1.1).contains(&g1), "gamma1 mean {g1}");
    assert!((1.85..=2.15).contains(&g2), "gamma2 mean {g2}");
    assert!(agg.gamma_coverage[0] >= 0.80 && agg.gamma_coverage[1] >= 0.80,
        "gamma coverage {:?}", agg.gamma_coverage);
    let pcov = agg.prediction_coverage.unwrap();
    assert!(pcov >= 0.80, "prediction coverage {pcov}");
    pass(
        "criterion 09 dense-only pipeline",
        format!(
            "gamma ({g1:.3}, {g2:.3}), coverage ({:.2}, {:.2}), pred coverage {pcov:.3}, RMSPE {:.3}",
            agg.gamma_coverage[0], agg.gamma_coverage[1], agg.rmspe.0
        ),
    );
}

/// Criterion 10: a 95% HPD interval from 1e5 standard-normal draws lands
/// within 0.02 of (-1.96, 1.96), and HPD is never wider than the
/// equal-tailed interval over 100 random mixtures.
#[test]
fn criterion_10_hpd_interval_correctness() {
    let mut s = SeededRng::new(22).stream("norm", 0);
    let n = 100_000;
    let mut draws: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = hpd_interval(&draws, 0.95);
    assert!((lo + 1.96).abs() <= 0.02, "lower {lo}");
    assert!((hi - 1.96).abs() <= 0.02, "upper {hi}");

    let rng = SeededRng::new(23);
    for t in 0..100u64 {
        let mut s = rng.stream("mixture", t);
        let shift = 4.0 * s.uniform() - 2.0;
        let weight = s.uniform();
        let spread = 0.3 + 2.0 * s.uniform();
        let level = 0.5 + 0.45 * s.uniform();
        let mut draws: Vec<f64> = (0..3000)
            .map(|_| {
                if s.uniform() < weight {
                    s.standard_normal()
                } else {
                    shift + spread * s.standard_normal()
                }
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let hpd = hpd_interval(&draws, level);
        let eq = equal_tailed_interval(&draws, level);
        assert!(
            hpd.1 - hpd.0 <= eq.1 - eq.0 + 1e-12,
            "mixture {t}: HPD width {} > equal-tailed width {}",
            hpd.1 - hpd.0,
            eq.1 - eq.0
        );
    }
    pass(
        "criterion 10 HPD correctness",
        format!("normal HPD ({lo:.3}, {hi:.3}); width <= equal-tailed on 100 mixtures"),
    );
}

/// Criterion 11: the smoothness-1/2 covariance equals `s2 exp(-d/rho)` to
/// 1e-12 on a distance grid, and the lattice sampler's second moments match
/// the covariance within 5% at N = 5000 images.
#[test]
fn criterion_11_matern_forms_and_gp_moments() {
    let params = MaternParams { variance: 1.0, smoothness: 0.5, range: 15.0 };
    for k in 0..200 {
        let d = k as f64 * 0.35;
        let closed = (-d / 15.0).exp();
        let v = matern_cov(d, &params).unwrap();
        assert!((v - closed).abs() <= 1e-12, "d={d}: {v} vs {closed}");
    }

    let n = 5000;
    let rng = SeededRng::new(3);
    let imgs = sample_gp_images(30, 30, &params, n, &rng).unwrap();
    let pix = 900;
    let mut worst_var: f64 = 0.0;
    for px in 0..pix {
        let mut acc = 0.0;
        for i in 0..n {
            let v = imgs.data()[i * pix + px];
            acc += v * v;
        }
        let var = acc / n as f64;
        worst_var = worst_var.max((var - 1.0).abs());
    }
    assert!(worst_var <= 0.05, "pointwise variance off by {worst_var}");

    // correlation at lattice distance 15 (pixels (7,7) and (7,22))
    let a = 7 * 30 + 7;
    let b = 7 * 30 + 22;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..n {
        let x = imgs.data()[i * pix + a];
        let y = imgs.data()[i * pix + b];
        num += x * y;
        va += x * x;
        vb += y * y;
    }
    let corr = num / (va.sqrt() * vb.sqrt());
    let expect = matern_cov(15.0, &params).unwrap();
    assert!((corr - expect).abs() <= 0.05, "corr {corr} vs {expect}");
    pass(
        "criterion 11 Matern/GP moments",
        format!("closed form <= 1e-12; worst variance dev {worst_var:.3}, corr {corr:.3} vs {expect:.3}"),
    );
}

/// Criterion 5 companion check on a second Tensor contract: simulated
/// dataset files round-trip byte-exactly (reproducibility across the suite).
#[test]
fn dataset_reproducibility_byte_exact() {
    use bayescglm_core::pipeline::dataset::{save_dataset, simulate_dataset};
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let ds =
            simulate_dataset(GlmFamily::Gaussian, SimDesign::Lattice, 25, 18, 99).unwrap();
        save_dataset(out, &ds).unwrap();
    }
    for f in ["x.bct", "z.bct", "y.bct", "phi_true.bct", "manifest.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
