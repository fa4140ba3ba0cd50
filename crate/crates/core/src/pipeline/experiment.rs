//! Repeated simulate/fit/predict cycles with a classical-GLM baseline and
//! the aggregate table the reports are built from.

use super::dataset::{simulate_dataset, SimDesign};
use super::{
    default_config, evaluate_on, fit_baseline_glm, fit_bayescglm, FitOptions,
};
use crate::ensemble::MetricsReport;
use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::nn::NetworkConfig;
use crate::rng::SeededRng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub family: GlmFamily,
    pub design: SimDesign,
    pub replicates: usize,
    pub n: usize,
    pub n_train: usize,
    pub draws: usize,
    pub seed: u64,
    pub config: Option<NetworkConfig>,
    pub workers: Option<usize>,
    /// Run replicates in parallel when true (each replicate stays internally
    /// deterministic, so results are identical either way).
    pub parallel_replicates: bool,
}

impl ExperimentOptions {
    pub fn new(family: GlmFamily, design: SimDesign) -> ExperimentOptions {
        ExperimentOptions {
            family,
            design,
            replicates: 10,
            n: 1000,
            n_train: 700,
            draws: 50,
            seed: 0,
            config: None,
            workers: None,
            parallel_replicates: true,
        }
    }
}

/// One replicate's results (or its failure).
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub gamma_mean: Vec<f64>,
    pub gamma_hpd: Vec<(f64, f64)>,
    pub gamma_covered: Vec<bool>,
    pub metrics: MetricsReport,
    pub baseline_gamma: Vec<f64>,
    pub baseline_covered: Vec<bool>,
    pub baseline_metrics: MetricsReport,
    pub glm_failures: usize,
    pub ridged_draws: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub family: GlmFamily,
    pub design: SimDesign,
    pub gamma_true: Vec<f64>,
    pub replicates: Vec<ReplicateOutcome>,
    pub draws: usize,
    pub n: usize,
    pub n_train: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates over the successful replicates, ensemble and baseline side by
/// side (the layout of the reported tables).
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub gamma_mean: Vec<(f64, f64)>,
    pub gamma_coverage: Vec<f64>,
    pub rmspe: (f64, f64),
    pub prediction_coverage: Option<f64>,
    pub accuracy: Option<(f64, f64)>,
    pub recall: Option<(f64, f64)>,
    pub precision: Option<(f64, f64)>,
    pub auc: Option<(f64, f64)>,
    pub baseline_gamma_mean: Vec<(f64, f64)>,
    pub baseline_gamma_coverage: Vec<f64>,
    pub baseline_rmspe: (f64, f64),
    pub baseline_accuracy: Option<(f64, f64)>,
    pub mean_seconds: f64,
    pub succeeded: usize,
    pub failed: usize,
}

impl ExperimentReport {
    pub fn successes(&self) -> impl Iterator<Item = &ReplicateOutcome> {
        self.replicates.iter().filter(|r| r.error.is_none())
    }

    pub fn aggregate(&self) -> Aggregate {
        let ok: Vec<&ReplicateOutcome> = self.successes().collect();
        let p = self.gamma_true.len();
        let col =
            |f: &dyn Fn(&ReplicateOutcome) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
        let opt_col = |f: &dyn Fn(&ReplicateOutcome) -> Option<f64>| -> Option<Vec<f64>> {
            let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
            (!v.is_empty()).then_some(v)
        };

        let mut gamma_mean = Vec::new();
        let mut gamma_coverage = Vec::new();
        let mut baseline_gamma_mean = Vec::new();
        let mut baseline_gamma_coverage = Vec::new();
        for j in 0..p {
            gamma_mean.push(mean_sd(&col(&|r| r.gamma_mean[j])));
            gamma_coverage.push(
                ok.iter().filter(|r| r.gamma_covered[j]).count() as f64 / ok.len().max(1) as f64,
            );
            baseline_gamma_mean.push(mean_sd(&col(&|r| r.baseline_gamma[j])));
            baseline_gamma_coverage.push(
                ok.iter().filter(|r| r.baseline_covered[j]).count() as f64 / ok.len().max(1) as f64,
            );
        }

        Aggregate {
            gamma_mean,
            gamma_coverage,
            rmspe: mean_sd(&col(&|r| r.metrics.rmspe)),
            prediction_coverage: opt_col(&|r| r.metrics.coverage).map(|v| mean_sd(&v).0),
            accuracy: opt_col(&|r| r.metrics.accuracy).map(|v| mean_sd(&v)),
            recall: opt_col(&|r| r.metrics.recall).map(|v| mean_sd(&v)),
            precision: opt_col(&|r| r.metrics.precision).map(|v| mean_sd(&v)),
            auc: opt_col(&|r| r.metrics.auc).map(|v| mean_sd(&v)),
            baseline_gamma_mean,
            baseline_gamma_coverage,
            baseline_rmspe: mean_sd(&col(&|r| r.baseline_metrics.rmspe)),
            baseline_accuracy: opt_col(&|r| r.baseline_metrics.accuracy).map(|v| mean_sd(&v)),
            mean_seconds: mean_sd(&col(&|r| r.seconds)).0,
            succeeded: ok.len(),
            failed: self.replicates.len() - ok.len(),
        }
    }
}

fn run_replicate(opts: &ExperimentOptions, replicate: usize, fit_workers: Option<usize>) -> ReplicateOutcome {
    let started = std::time::Instant::now();
    let seed = SeededRng::new(opts.seed).derive_seed("replicate", replicate as u64);
    let mut outcome = ReplicateOutcome {
        replicate,
        seed,
        gamma_mean: Vec::new(),
        gamma_hpd: Vec::new(),
        gamma_covered: Vec::new(),
        metrics: MetricsReport::default(),
        baseline_gamma: Vec::new(),
        baseline_covered: Vec::new(),
        baseline_metrics: MetricsReport::default(),
        glm_failures: 0,
        ridged_draws: 0,
        seconds: 0.0,
        error: None,
    };
    let result = (|| -> Result<()> {
        let ds = simulate_dataset(opts.family, opts.design, opts.n, opts.n_train, seed)?;
        let (xt, zt, yt, xe, ze, ye) = ds.train_test()?;
        let config = opts
            .config
            .clone()
            .unwrap_or_else(|| default_config(opts.family, opts.design));
        let fit_opts = FitOptions {
            draws: opts.draws,
            seed,
            workers: fit_workers,
            ..FitOptions::default()
        };
        let model = fit_bayescglm(config, &xt, Some(&zt), &yt, opts.family, &fit_opts)?;
        let (_, metrics) = evaluate_on(&model, &xe, Some(&ze), &ye, &fit_opts)?;

        let gammas = model.gamma_summaries();
        outcome.gamma_mean = gammas.iter().map(|g| g.mean).collect();
        outcome.gamma_hpd = gammas.iter().map(|g| g.hpd).collect();
        outcome.gamma_covered = gammas
            .iter()
            .zip(&ds.gamma)
            .map(|(g, t)| g.hpd.0 <= *t && *t <= g.hpd.1)
            .collect();
        outcome.metrics = metrics;
        outcome.glm_failures = model.glm_failures;
        outcome.ridged_draws = model.ridged_draws;

        let baseline = fit_baseline_glm(&zt, &yt, opts.family)?;
        outcome.baseline_gamma = baseline.gamma.clone();
        outcome.baseline_covered = baseline
            .gamma_intervals(0.95)
            .iter()
            .zip(&ds.gamma)
            .map(|(iv, t)| iv.0 <= *t && *t <= iv.1)
            .collect();
        let preds = baseline.predict(&ze);
        let n_test = ye.len() as f64;
        outcome.baseline_metrics.rmspe = (ye
            .data()
            .iter()
            .zip(&preds)
            .map(|(t, p)| (t - p) * (t - p))
            .sum::<f64>()
            / n_test)
            .sqrt();
        if opts.family == GlmFamily::Bernoulli {
            let correct = ye
                .data()
                .iter()
                .zip(&preds)
                .filter(|(t, p)| (**p >= 0.5) == (**t > 0.5))
                .count();
            outcome.baseline_metrics.accuracy = Some(correct as f64 / n_test);
            outcome.baseline_metrics.auc = Some(crate::ensemble::auc(ye.data(), &preds));
        }
        Ok(())
    })();
    if let Err(e) = result {
        outcome.error = Some(e.to_string());
    }
    outcome.seconds = started.elapsed().as_secs_f64();
    outcome
}

/// Runs `replicates` independent simulate+fit cycles on distinct substream
/// seeds and collects per-replicate rows. Failures become rows with an error
/// string rather than aborting the experiment.
pub fn run_experiment(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    if opts.replicates == 0 {
        return Err(Error::InvalidConfig("need at least one replicate".into()));
    }
    // One pool for the whole experiment: replicates fan out across it and
    // the per-fit draw loops inherit it, instead of nesting pools.
    let all = |fit_workers: Option<usize>| -> Vec<ReplicateOutcome> {
        if opts.parallel_replicates {
            (0..opts.replicates)
                .into_par_iter()
                .map(|r| run_replicate(opts, r, fit_workers))
                .collect()
        } else {
            (0..opts.replicates).map(|r| run_replicate(opts, r, fit_workers)).collect()
        }
    };
    let replicates: Vec<ReplicateOutcome> = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(|| all(None)),
        None => all(None),
    };
    let gamma_true = match opts.design {
        SimDesign::Lattice => vec![1.0, 1.0],
        SimDesign::SimpleNn => crate::simulate::SIMPLE_NN_GAMMA.to_vec(),
    };
    Ok(ExperimentReport {
        family: opts.family,
        design: opts.design,
        gamma_true,
        replicates,
        draws: opts.draws,
        n: opts.n,
        n_train: opts.n_train,
    })
}

fn fmt_pair(p: (f64, f64)) -> String {
    format!("{:.3} ({:.3})", p.0, p.1)
}

fn fmt_opt_pair(p: Option<(f64, f64)>) -> String {
    p.map_or_else(|| "-".to_string(), fmt_pair)
}

/// Human-readable aggregate table, ensemble and baseline side by side.
pub fn render_experiment_table(report: &ExperimentReport) -> String {
    let agg = report.aggregate();
    let mut out = String::new();
    out.push_str(&format!(
        "family: {}  design: {}  replicates: {} ok / {} failed  n: {} ({} train)  draws: {}\n\n",
        report.family.name(),
        report.design.name(),
        agg.succeeded,
        agg.failed,
        report.n,
        report.n_train,
        report.draws,
    ));
    out.push_str(&format!("{:<24}{:>18}{:>18}\n", "", "BayesCGLM", "GLM"));
    for j in 0..report.gamma_true.len() {
        out.push_str(&format!(
            "{:<24}{:>18}{:>18}\n",
            format!("gamma{} mean", j + 1),
            fmt_pair(agg.gamma_mean[j]),
            fmt_pair(agg.baseline_gamma_mean[j]),
        ));
        out.push_str(&format!(
            "{:<24}{:>18}{:>18}\n",
            format!("gamma{} coverage", j + 1),
            format!("{:.3}", agg.gamma_coverage[j]),
            format!("{:.3}", agg.baseline_gamma_coverage[j]),
        ));
    }
    out.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "prediction rmspe",
        fmt_pair(agg.rmspe),
        fmt_pair(agg.baseline_rmspe),
    ));
    if let Some(cov) = agg.prediction_coverage {
        out.push_str(&format!("{:<24}{:>18}{:>18}\n", "prediction coverage", format!("{cov:.3}"), "-"));
    }
    if agg.accuracy.is_some() {
        out.push_str(&format!(
            "{:<24}{:>18}{:>18}\n",
            "prediction accuracy",
            fmt_opt_pair(agg.accuracy),
            fmt_opt_pair(agg.baseline_accuracy),
        ));
        out.push_str(&format!(
            "{:<24}{:>18}{:>18}\n",
            "prediction recall",
            fmt_opt_pair(agg.recall),
            "-",
        ));
        out.push_str(&format!(
            "{:<24}{:>18}{:>18}\n",
            "prediction precision",
            fmt_opt_pair(agg.precision),
            "-",
        ));
        out.push_str(&format!("{:<24}{:>18}{:>18}\n", "prediction auc", fmt_opt_pair(agg.auc), "-"));
    }
    out.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "time (s / replicate)",
        format!("{:.1}", agg.mean_seconds),
        "-",
    ));
    out
}

/// Per-replicate CSV with a fixed column order.
pub fn replicates_csv(report: &ExperimentReport) -> String {
    let p = report.gamma_true.len();
    let mut header = vec!["replicate".to_string(), "seed".to_string()];
    for j in 1..=p {
        header.push(format!("gamma{j}_mean"));
        header.push(format!("gamma{j}_hpd_lower"));
        header.push(format!("gamma{j}_hpd_upper"));
        header.push(format!("gamma{j}_covered"));
    }
    header.extend(
        [
            "rmspe",
            "pred_coverage",
            "accuracy",
            "recall",
            "precision",
            "auc",
        ]
        .map(String::from),
    );
    for j in 1..=p {
        header.push(format!("baseline_gamma{j}"));
        header.push(format!("baseline_gamma{j}_covered"));
    }
    header.extend(["baseline_rmspe", "baseline_accuracy", "glm_failures", "ridged_draws", "seconds", "error"].map(String::from));

    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "".to_string(), |x| format!("{x}"));
    let mut out = header.join(",");
    out.push('\n');
    for r in &report.replicates {
        let mut row = vec![format!("{}", r.replicate), format!("{}", r.seed)];
        for j in 0..p {
            if r.error.is_none() {
                row.push(format!("{}", r.gamma_mean[j]));
                row.push(format!("{}", r.gamma_hpd[j].0));
                row.push(format!("{}", r.gamma_hpd[j].1));
                row.push(format!("{}", r.gamma_covered[j] as u8));
            } else {
                row.extend(["", "", "", ""].map(String::from));
            }
        }
        if r.error.is_none() {
            row.push(format!("{}", r.metrics.rmspe));
        } else {
            row.push(String::new());
        }
        row.push(fmt_opt(r.metrics.coverage));
        row.push(fmt_opt(r.metrics.accuracy));
        row.push(fmt_opt(r.metrics.recall));
        row.push(fmt_opt(r.metrics.precision));
        row.push(fmt_opt(r.metrics.auc));
        for j in 0..p {
            if r.error.is_none() {
                row.push(format!("{}", r.baseline_gamma[j]));
                row.push(format!("{}", r.baseline_covered[j] as u8));
            } else {
                row.extend(["", ""].map(String::from));
            }
        }
        if r.error.is_none() {
            row.push(format!("{}", r.baseline_metrics.rmspe));
        } else {
            row.push(String::new());
        }
        row.push(fmt_opt(r.baseline_metrics.accuracy));
        row.push(format!("{}", r.glm_failures));
        row.push(format!("{}", r.ridged_draws));
        row.push(format!("{}", r.seconds));
        row.push(r.error.clone().unwrap_or_default().replace(',', ";"));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Aggregate CSV: metric, ensemble value, ensemble sd, baseline value,
/// baseline sd.
pub fn aggregate_csv(report: &ExperimentReport) -> String {
    let agg = report.aggregate();
    let mut out = String::from("metric,bayescglm,bayescglm_sd,glm,glm_sd\n");
    let num = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
    for j in 0..report.gamma_true.len() {
        out.push_str(&format!(
            "gamma{}_mean,{},{},{},{}\n",
            j + 1,
            num(agg.gamma_mean[j].0),
            num(agg.gamma_mean[j].1),
            num(agg.baseline_gamma_mean[j].0),
            num(agg.baseline_gamma_mean[j].1),
        ));
        out.push_str(&format!(
            "gamma{}_coverage,{},,{},\n",
            j + 1,
            num(agg.gamma_coverage[j]),
            num(agg.baseline_gamma_coverage[j]),
        ));
    }
    out.push_str(&format!(
        "rmspe,{},{},{},{}\n",
        num(agg.rmspe.0),
        num(agg.rmspe.1),
        num(agg.baseline_rmspe.0),
        num(agg.baseline_rmspe.1)
    ));
    if let Some(cov) = agg.prediction_coverage {
        out.push_str(&format!("prediction_coverage,{},,,\n", num(cov)));
    }
    if let Some((a, sd)) = agg.accuracy {
        let (ba, bsd) = agg.baseline_accuracy.unwrap_or((f64::NAN, f64::NAN));
        out.push_str(&format!("accuracy,{},{},{},{}\n", num(a), num(sd), num(ba), num(bsd)));
    }
    if let Some((a, sd)) = agg.recall {
        out.push_str(&format!("recall,{},{},,\n", num(a), num(sd)));
    }
    if let Some((a, sd)) = agg.precision {
        out.push_str(&format!("precision,{},{},,\n", num(a), num(sd)));
    }
    if let Some((a, sd)) = agg.auc {
        out.push_str(&format!("auc,{},{},,\n", num(a), num(sd)));
    }
    out.push_str(&format!("seconds_per_replicate,{},,,\n", num(agg.mean_seconds)));
    out.push_str(&format!("replicates_ok,{},,,\n", agg.succeeded));
    out.push_str(&format!("replicates_failed,{},,,\n", agg.failed));
    out
}
