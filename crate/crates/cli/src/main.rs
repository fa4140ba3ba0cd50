//! Command-line front door: simulate datasets, fit the ensemble, predict on
//! new rows, run repeated experiments, and render reports.
//!
//! Exit codes: 2 invalid flags or configuration, 3 generation failure,
//! 4 non-finite training loss, 5 too many per-draw GLM failures, 6 shape
//! mismatch on prediction inputs, 1 anything else.

use bayescglm_core::error::Error as CoreError;
use bayescglm_core::glm::GlmFamily;
use bayescglm_core::nn::config_text;
use bayescglm_core::pipeline::{
    self, aggregate_csv, dataset, fit_bayescglm, load_model, predict_rows,
    render_experiment_table, replicates_csv, run_experiment, save_model, ExperimentOptions,
    FitOptions, RunManifest, SimDesign,
};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bayescglm", version, about = "MC-dropout ensemble GLM pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (tensors plus a CSV manifest).
    Simulate(SimulateArgs),
    /// Train the network, draw MC features, and fit the GLM ensemble.
    Fit(FitArgs),
    /// Predict new rows from a fitted model directory.
    Predict(PredictArgs),
    /// Repeated simulate+fit cycles with an aggregate table.
    Experiment(ExperimentArgs),
    /// Render the report tables stored in an output directory.
    Report(ReportArgs),
}

fn parse_family(s: &str) -> Result<GlmFamily, String> {
    GlmFamily::parse(s).ok_or_else(|| format!("unknown family {s:?} (gaussian|bernoulli|poisson)"))
}

fn parse_design(s: &str) -> Result<SimDesign, String> {
    SimDesign::parse(s).ok_or_else(|| format!("unknown design {s:?} (lattice|simple-nn)"))
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    family: GlmFamily,
    /// Generator: GP images on the lattice, or the small dense example.
    #[arg(long, value_parser = parse_design, default_value = "lattice")]
    design: SimDesign,
    /// Total rows (the manifest records the train/test split).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Rows used for fitting; the remainder is the test split.
    #[arg(long)]
    train_n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory written by `simulate` (or hand-assembled with the
    /// same layout).
    #[arg(long)]
    data_dir: PathBuf,
    /// Network configuration file; defaults to the built-in per-family
    /// desk-scale configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of MC dropout draws (M).
    #[arg(long, default_value_t = 300)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace every dropout rate in the configuration.
    #[arg(long)]
    dropout: Option<f64>,
    /// Worker threads for the draw/GLM fan-out.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    model_dir: PathBuf,
    /// Directory with `x.bct` (and `z.bct` when the model uses covariates).
    #[arg(long)]
    data_dir: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = parse_family)]
    family: GlmFamily,
    #[arg(long, value_parser = parse_design, default_value = "lattice")]
    design: SimDesign,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    train_n: Option<usize>,
    #[arg(long, default_value_t = 50)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for the per-replicate and aggregate tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A `fit` or `experiment` output directory.
    #[arg(long)]
    dir: PathBuf,
}

fn exit_for(err: &CoreError, context: &str) -> u8 {
    match err {
        CoreError::InvalidConfig(_) | CoreError::InvalidRate(_) | CoreError::InvalidProbability(_) => 2,
        CoreError::NonFiniteLoss { .. } => 4,
        CoreError::TooManyGlmFailures { .. } => 5,
        _ if context == "simulate" => 3,
        _ if context == "predict" => 6,
        _ => 1,
    }
}

fn fail(err: CoreError, context: &str) -> ExitCode {
    eprintln!("error [{context}]: {err}");
    ExitCode::from(exit_for(&err, context))
}

fn write_text(path: &Path, text: &str) -> Result<(), CoreError> {
    std::fs::write(path, text)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

fn cmd_simulate(args: SimulateArgs) -> ExitCode {
    if args.n < 2 {
        eprintln!("error [simulate]: --n must be at least 2");
        return ExitCode::from(2);
    }
    let train_n = args.train_n.unwrap_or_else(|| (args.n * 7) / 10);
    if train_n == 0 || train_n >= args.n {
        eprintln!("error [simulate]: --train-n must satisfy 0 < train_n < n");
        return ExitCode::from(2);
    }
    let run = || -> Result<(), CoreError> {
        let ds = dataset::simulate_dataset(args.family, args.design, args.n, train_n, args.seed)?;
        dataset::save_dataset(&args.out, &ds)?;
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "simulate".into(),
            seed: args.seed,
            family: args.family.name().into(),
            draws: 0,
            config_path: None,
            dataset_paths: vec![args.out.display().to_string()],
            n_train: train_n,
            n_test: args.n - train_n,
            out_dir: args.out.display().to_string(),
        }
        .write(&args.out)?;
        Ok(())
    };
    match run() {
        Ok(()) => {
            println!("wrote dataset to {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e, "simulate"),
    }
}

fn coefficients_csv(model: &pipeline::FittedModel) -> String {
    let mut out = String::from("index,name,post_mean,hpd_lower,hpd_upper,eq_lower,eq_upper\n");
    for (i, (name, c)) in model.coefficient_names().iter().zip(&model.coefficients).enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i, name, c.mean, c.hpd.0, c.hpd.1, c.equal_tailed.0, c.equal_tailed.1
        ));
    }
    out
}

fn feature_pca(model: &pipeline::FittedModel) -> Option<(bayescglm_core::ensemble::PcaScores, usize)> {
    let k = model.trained.feature_dim();
    let n = model.feature_draws.n;
    if k < 2 || n <= 2 {
        return None;
    }
    let mean_phi = model.feature_draws.mean_features();
    bayescglm_core::ensemble::pca_scores(&mean_phi, n, k).ok().map(|p| (p, n))
}

fn pca_csv(scores: &bayescglm_core::ensemble::PcaScores, n: usize) -> String {
    let mut out = String::from("row,pc1,pc2\n");
    for i in 0..n {
        out.push_str(&format!("{},{},{}\n", i, scores.scores[i * 2], scores.scores[i * 2 + 1]));
    }
    out
}

fn fit_report_text(model: &pipeline::FittedModel, draws_requested: usize) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "family: {}  draws kept: {} of {} ({} failed, {} ridged)\n",
        model.family.name(),
        model.ensemble.m(),
        draws_requested,
        model.glm_failures,
        model.ridged_draws,
    ));
    if model.family == GlmFamily::Gaussian {
        out.push_str(&format!("pooled residual variance: {:.6}\n", model.sigma2));
    }
    if let Some((pca, _)) = feature_pca(model) {
        out.push_str(&format!(
            "mean-feature PCA explained variance: {:.1}% / {:.1}%\n",
            100.0 * pca.explained.0,
            100.0 * pca.explained.1
        ));
    }
    if let Some(best) = model.trained.log.best_epoch {
        out.push_str(&format!(
            "training: {} epochs run, best validation at epoch {}\n",
            model.trained.log.epochs.len(),
            best
        ));
    }
    let net_gamma = model.trained.gamma_estimate();
    if !net_gamma.is_empty() {
        let joined: Vec<String> = net_gamma.iter().map(|v| format!("{v:.4}")).collect();
        out.push_str(&format!(
            "network covariate-block point estimate: ({})\n",
            joined.join(", ")
        ));
    }
    out.push('\n');
    out.push_str(&format!("{:<10}{:>12}  {:>24}\n", "coef", "post mean", "95% HPD"));
    for (name, c) in model.coefficient_names().iter().zip(&model.coefficients) {
        out.push_str(&format!(
            "{:<10}{:>12.4}  {:>24}\n",
            name,
            c.mean,
            format!("({:.4}, {:.4})", c.hpd.0, c.hpd.1)
        ));
    }
    out
}

fn cmd_fit(args: FitArgs) -> ExitCode {
    let run = || -> Result<(usize, PathBuf), CoreError> {
        let ds = dataset::load_dataset(&args.data_dir)?;
        let config = match &args.config {
            Some(path) => config_text::read_config(path)?,
            None => pipeline::default_config(ds.family, ds.design),
        };
        let (xt, zt, yt, ..) = ds.train_test()?;
        let opts = FitOptions {
            draws: args.draws,
            seed: args.seed,
            workers: args.workers,
            dropout_override: args.dropout,
            ..FitOptions::default()
        };
        let model = fit_bayescglm(config, &xt, Some(&zt), &yt, ds.family, &opts)?;
        std::fs::create_dir_all(&args.out)
            .map_err(|e| CoreError::Io { path: args.out.display().to_string(), source: e })?;
        save_model(&args.out, &model)?;
        write_text(&args.out.join("coefficients.csv"), &coefficients_csv(&model))?;
        write_text(&args.out.join("report.txt"), &fit_report_text(&model, args.draws))?;
        if let Some((pca, n)) = feature_pca(&model) {
            write_text(&args.out.join("pca.csv"), &pca_csv(&pca, n))?;
        }
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "fit".into(),
            seed: args.seed,
            family: ds.family.name().into(),
            draws: args.draws,
            config_path: args.config.as_ref().map(|p| p.display().to_string()),
            dataset_paths: vec![args.data_dir.display().to_string()],
            n_train: ds.n_train,
            n_test: ds.n() - ds.n_train,
            out_dir: args.out.display().to_string(),
        }
        .write(&args.out)?;
        Ok((model.ensemble.m(), args.out.clone()))
    };
    match run() {
        Ok((kept, out)) => {
            println!("fit complete: {kept} ensemble components, artifacts in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e, "fit"),
    }
}

fn predictions_csv(
    summaries: &[bayescglm_core::ensemble::PredictiveSummary],
    family: GlmFamily,
) -> String {
    let mut out = String::new();
    match family {
        GlmFamily::Bernoulli => {
            out.push_str("row,probability,class,hpd_lower,hpd_upper\n");
            for (i, s) in summaries.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    i,
                    s.point,
                    u8::from(s.point >= 0.5),
                    s.hpd.0,
                    s.hpd.1
                ));
            }
        }
        _ => {
            out.push_str("row,point,hpd_lower,hpd_upper\n");
            for (i, s) in summaries.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", i, s.point, s.hpd.0, s.hpd.1));
            }
        }
    }
    out
}

fn cmd_predict(args: PredictArgs) -> ExitCode {
    let run = || -> Result<usize, CoreError> {
        let model = load_model(&args.model_dir)?;
        let x = bayescglm_core::io::read_tensor(&args.data_dir.join("x.bct"))?;
        let z_path = args.data_dir.join("z.bct");
        let z = if model.z_width > 0 {
            Some(bayescglm_core::io::read_tensor(&z_path)?)
        } else {
            None
        };
        if let Some(zt) = &z {
            if zt.outer() != x.outer() || zt.shape()[1] != model.z_width {
                return Err(CoreError::shape(
                    "predict",
                    format!(
                        "z is {:?}, model wants {} rows x {}",
                        zt.shape(),
                        x.outer(),
                        model.z_width
                    ),
                ));
            }
        }
        let opts = FitOptions { seed: args.seed, workers: args.workers, ..FitOptions::default() };
        let summaries = predict_rows(&model.view(), &x, z.as_ref(), &opts)?;
        write_text(&args.out, &predictions_csv(&summaries, model.family))?;
        Ok(summaries.len())
    };
    match run() {
        Ok(rows) => {
            println!("wrote {rows} predictions to {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e, "predict"),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> ExitCode {
    if args.replicates == 0 {
        eprintln!("error [experiment]: --replicates must be at least 1");
        return ExitCode::from(2);
    }
    let train_n = args.train_n.unwrap_or_else(|| (args.n * 7) / 10);
    if train_n == 0 || train_n >= args.n {
        eprintln!("error [experiment]: --train-n must satisfy 0 < train_n < n");
        return ExitCode::from(2);
    }
    let run = || -> Result<String, CoreError> {
        let config = match &args.config {
            Some(path) => Some(config_text::read_config(path)?),
            None => None,
        };
        let mut opts = ExperimentOptions::new(args.family, args.design);
        opts.replicates = args.replicates;
        opts.n = args.n;
        opts.n_train = train_n;
        opts.draws = args.draws;
        opts.seed = args.seed;
        opts.config = config;
        opts.workers = args.workers;
        let report = run_experiment(&opts)?;
        let table = render_experiment_table(&report);
        if let Some(out) = &args.out {
            std::fs::create_dir_all(out)
                .map_err(|e| CoreError::Io { path: out.display().to_string(), source: e })?;
            write_text(&out.join("replicates.csv"), &replicates_csv(&report))?;
            write_text(&out.join("aggregate.csv"), &aggregate_csv(&report))?;
            write_text(&out.join("aggregate.txt"), &table)?;
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: "experiment".into(),
                seed: args.seed,
                family: args.family.name().into(),
                draws: args.draws,
                config_path: args.config.as_ref().map(|p| p.display().to_string()),
                dataset_paths: Vec::new(),
                n_train: train_n,
                n_test: args.n - train_n,
                out_dir: out.display().to_string(),
            }
            .write(out)?;
        }
        Ok(table)
    };
    match run() {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e, "experiment"),
    }
}

fn cmd_report(args: ReportArgs) -> ExitCode {
    for name in ["aggregate.txt", "report.txt"] {
        let path = args.dir.join(name);
        if path.exists() {
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    print!("{text}");
                    return ExitCode::SUCCESS;
                }
                Err(e) => {
                    eprintln!("error [report]: cannot read {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
        }
    }
    eprintln!(
        "error [report]: no aggregate.txt or report.txt under {}",
        args.dir.display()
    );
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Report(args) => cmd_report(args),
    }
}
