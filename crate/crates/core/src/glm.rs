//! Exponential-family GLMs with canonical links: IRLS maximum likelihood,
//! observed Fisher information, the Laplace posterior, and a random-walk
//! Metropolis oracle used to validate the Laplace approximation.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, CholeskyFactor};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

const MAX_IRLS_ITER: usize = 100;
const STEP_TOL: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian,
    Bernoulli,
    Poisson,
}

impl GlmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GlmFamily::Gaussian => "gaussian",
            GlmFamily::Bernoulli => "bernoulli",
            GlmFamily::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Option<GlmFamily> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Some(GlmFamily::Gaussian),
            "bernoulli" | "binary" => Some(GlmFamily::Bernoulli),
            "poisson" | "count" => Some(GlmFamily::Poisson),
            _ => None,
        }
    }

    /// Canonical link name: identity / logit / log.
    pub fn link_name(&self) -> &'static str {
        match self {
            GlmFamily::Gaussian => "identity",
            GlmFamily::Bernoulli => "logit",
            GlmFamily::Poisson => "log",
        }
    }

    /// Inverse of the canonical link.
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => eta,
            GlmFamily::Bernoulli => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            GlmFamily::Poisson => eta.exp(),
        }
    }

    /// Variance function at the mean (the IRLS weight under canonical links;
    /// Gaussian weights carry the dispersion separately).
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Bernoulli => mu * (1.0 - mu),
            GlmFamily::Poisson => mu,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmDataset {
    /// `[n, q]` row-major design matrix.
    pub design: Vec<f64>,
    pub n: usize,
    pub q: usize,
    pub y: Vec<f64>,
    pub family: GlmFamily,
}

impl GlmDataset {
    pub fn new(design: Vec<f64>, n: usize, q: usize, y: Vec<f64>, family: GlmFamily) -> Result<GlmDataset> {
        if design.len() != n * q || y.len() != n || n == 0 || q == 0 {
            return Err(Error::shape(
                "GlmDataset",
                format!("design {} for n={n}, q={q}; y {}", design.len(), y.len()),
            ));
        }
        if design.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("GlmDataset", "non-finite entries"));
        }
        match family {
            GlmFamily::Bernoulli => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::domain("GlmDataset", "Bernoulli responses must be 0/1"));
                }
            }
            GlmFamily::Poisson => {
                if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::domain(
                        "GlmDataset",
                        "Poisson responses must be nonnegative integers",
                    ));
                }
            }
            GlmFamily::Gaussian => {}
        }
        Ok(GlmDataset { design, n, q, y, family })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.q..(i + 1) * self.q]
    }

    pub fn linear_predictor(&self, beta: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = crate::tensor::dot(self.row(i), beta);
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    /// Observed Fisher information `A^T W A` at the MLE (over dispersion for
    /// the Gaussian family).
    pub fisher: Vec<f64>,
    /// Gaussian: the MLE dispersion `RSS / n`; 1 for the other families.
    pub dispersion: f64,
    pub iterations: usize,
    /// Ridge penalty used by the rank-deficiency fallback; 0 normally.
    pub ridge: f64,
}

/// Maximum-likelihood fit by iteratively reweighted least squares.
///
/// Canonical links make Fisher scoring coincide with Newton's method, so the
/// update solves `(A^T W A) step = A^T (y - mu)`. On a rank-deficient design
/// the fit restarts with a ridge of `1e-6 * trace(A^T A) / q` and flags it.
pub fn irls_fit(data: &GlmDataset) -> Result<GlmFit> {
    if data.n <= data.q {
        return Err(Error::shape(
            "irls_fit",
            format!("n = {} must exceed q = {}", data.n, data.q),
        ));
    }
    match irls_inner(data, 0.0) {
        Ok(fit) => Ok(fit),
        Err(Error::NotPositiveDefinite { .. }) | Err(Error::RankDeficient { .. }) => {
            let mut tr = 0.0;
            for i in 0..data.n {
                for v in data.row(i) {
                    tr += v * v;
                }
            }
            let ridge = 1e-6 * tr / data.q as f64;
            irls_inner(data, ridge)
        }
        Err(e) => Err(e),
    }
}

fn penalized_loglik(data: &GlmDataset, beta: &[f64], ridge: f64) -> f64 {
    let ll = log_likelihood(data, beta, 1.0).unwrap_or(f64::NEG_INFINITY);
    let pen: f64 = beta.iter().map(|b| b * b).sum::<f64>() * 0.5 * ridge;
    ll - pen
}

fn irls_inner(data: &GlmDataset, ridge: f64) -> Result<GlmFit> {
    let (n, q) = (data.n, data.q);
    let mut beta = vec![0.0; q];
    let mut eta = vec![0.0; n];
    let mut mu = vec![0.0; n];
    let mut info = vec![0.0; q * q];
    let mut score = vec![0.0; q];
    let mut iterations = 0;
    let mut prev_norm = 0.0f64;
    let mut objective = penalized_loglik(data, &beta, ridge);

    loop {
        iterations += 1;
        data.linear_predictor(&beta, &mut eta);
        let mut pinned = false;
        for i in 0..n {
            mu[i] = data.family.inverse_link(eta[i]);
            if !mu[i].is_finite() {
                return Err(Error::domain(
                    "irls_fit",
                    format!("fitted mean diverged at row {i} (eta = {})", eta[i]),
                ));
            }
            if data.family == GlmFamily::Bernoulli && (mu[i] == 0.0 || mu[i] == 1.0) {
                pinned = true;
            }
        }
        // Probabilities pinned at exactly 0/1 while the coefficient norm
        // keeps growing: the MLE is at infinity (separation), and the score
        // is about to vanish numerically before the norm threshold trips.
        if pinned && prev_norm > 30.0 {
            return Err(Error::Separation { norm: prev_norm });
        }
        info.fill(0.0);
        score.fill(0.0);
        for i in 0..n {
            let w = data.family.variance(mu[i]);
            let row = data.row(i);
            let r = data.y[i] - mu[i];
            for a in 0..q {
                score[a] += row[a] * r;
                let wa = w * row[a];
                for b in a..q {
                    info[a * q + b] += wa * row[b];
                }
            }
        }
        for a in 0..q {
            info[a * q + a] += ridge;
            for b in 0..a {
                info[a * q + b] = info[b * q + a];
            }
        }
        if ridge > 0.0 {
            for a in 0..q {
                score[a] -= ridge * beta[a];
            }
        }
        let chol = crate::linalg::cholesky_rank_checked(&info, q).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } if ridge == 0.0 => Error::RankDeficient { q },
            other => other,
        })?;
        let step = chol.solve(&score);

        // Newton with step halving: the full step can overshoot badly under
        // the log link, so back off until the penalized likelihood stops
        // decreasing.
        let mut scale = 1.0;
        let mut candidate = vec![0.0; q];
        let mut accepted = false;
        for _ in 0..30 {
            for ((c, b), s) in candidate.iter_mut().zip(&beta).zip(&step) {
                *c = b + scale * s;
            }
            let cand_obj = penalized_loglik(data, &candidate, ridge);
            if cand_obj.is_finite() && cand_obj >= objective - 1e-12 * objective.abs().max(1.0) {
                objective = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no uphill step left at ~1e-9 of the Newton direction
            break;
        }
        beta.copy_from_slice(&candidate);

        let norm: f64 = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if data.family == GlmFamily::Bernoulli && norm > SEPARATION_NORM {
            return Err(Error::Separation { norm });
        }
        prev_norm = norm;
        let max_step = step.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
        if max_step < STEP_TOL {
            break;
        }
        if iterations >= MAX_IRLS_ITER {
            return Err(Error::NoConvergence { max_iter: MAX_IRLS_ITER });
        }
    }

    // final weights and information at the MLE
    data.linear_predictor(&beta, &mut eta);
    for i in 0..n {
        mu[i] = data.family.inverse_link(eta[i]);
    }
    let dispersion = match data.family {
        GlmFamily::Gaussian => {
            let rss: f64 = (0..n).map(|i| (data.y[i] - mu[i]) * (data.y[i] - mu[i])).sum();
            (rss / n as f64).max(1e-12)
        }
        _ => 1.0,
    };
    info.fill(0.0);
    for i in 0..n {
        let w = data.family.variance(mu[i])
            / if data.family == GlmFamily::Gaussian { dispersion } else { 1.0 };
        let row = data.row(i);
        for a in 0..q {
            let wa = w * row[a];
            for b in a..q {
                info[a * q + b] += wa * row[b];
            }
        }
    }
    for a in 0..q {
        info[a * q + a] += ridge;
        for b in 0..a {
            info[a * q + b] = info[b * q + a];
        }
    }

    Ok(GlmFit { beta, fisher: info, dispersion, iterations, ridge })
}

fn ln_factorial(y: f64) -> f64 {
    let k = y as u64;
    if k < 2 {
        return 0.0;
    }
    if k <= 256 {
        (2..=k).map(|v| (v as f64).ln()).sum()
    } else {
        // Stirling series, plenty accurate past 256
        let x = y + 1.0;
        0.5 * ((2.0 * std::f64::consts::PI).ln() - x.ln())
            + x * (x.ln() - 1.0)
            + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x * x * x)
    }
}

/// Exact log-likelihood at `beta`. `dispersion` applies to the Gaussian
/// family only (pass 1.0 otherwise).
pub fn log_likelihood(data: &GlmDataset, beta: &[f64], dispersion: f64) -> Result<f64> {
    if beta.len() != data.q {
        return Err(Error::shape("log_likelihood", format!("beta len {}", beta.len())));
    }
    let mut eta = vec![0.0; data.n];
    data.linear_predictor(beta, &mut eta);
    let mut ll = 0.0;
    match data.family {
        GlmFamily::Gaussian => {
            if dispersion <= 0.0 {
                return Err(Error::domain("log_likelihood", "dispersion must be positive"));
            }
            let c = -0.5 * (2.0 * std::f64::consts::PI * dispersion).ln();
            for i in 0..data.n {
                let r = data.y[i] - eta[i];
                ll += c - r * r / (2.0 * dispersion);
            }
        }
        GlmFamily::Bernoulli => {
            // y ln mu + (1-y) ln(1-mu) written via softplus for stability
            for i in 0..data.n {
                let e = eta[i];
                let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
                ll += data.y[i] * e - softplus(e);
            }
        }
        GlmFamily::Poisson => {
            for i in 0..data.n {
                ll += data.y[i] * eta[i] - eta[i].exp() - ln_factorial(data.y[i]);
            }
        }
    }
    Ok(ll)
}

/// Gaussian (Laplace) approximation `N(mean, precision^{-1})`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    /// `q x q` precision (observed Fisher information).
    pub precision: Vec<f64>,
    chol: CholeskyFactor,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal standard deviations (square roots of the covariance diagonal).
    pub fn marginal_sd(&self) -> Vec<f64> {
        let cov = self.chol.inverse();
        let q = self.dim();
        (0..q).map(|i| cov[i * q + i].sqrt()).collect()
    }

    pub fn covariance(&self) -> Vec<f64> {
        self.chol.inverse()
    }

    /// Row-wise quadratic form `a^T precision^{-1} a`.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let v = self.chol.solve_lower(a);
        v.iter().map(|x| x * x).sum()
    }

    /// Draws `count` samples, `count x q` row-major: `mean + L^{-T} z`.
    pub fn draw(&self, stream: &mut RngStream, count: usize) -> Vec<f64> {
        let q = self.dim();
        let mut out = vec![0.0; count * q];
        let mut z = vec![0.0; q];
        for c in 0..count {
            stream.fill_standard_normal(&mut z);
            let x = self.chol.solve_upper(&z);
            for (o, (m, v)) in out[c * q..(c + 1) * q].iter_mut().zip(self.mean.iter().zip(&x)) {
                *o = m + v;
            }
        }
        out
    }

    pub fn draw_into(&self, stream: &mut RngStream, out: &mut [f64]) {
        let q = self.dim();
        let mut z = vec![0.0; q];
        stream.fill_standard_normal(&mut z);
        let x = self.chol.solve_upper(&z);
        for (o, (m, v)) in out.iter_mut().zip(self.mean.iter().zip(&x)) {
            *o = m + v;
        }
    }
}

/// Builds the Laplace component from an MLE and its Fisher information.
pub fn laplace_posterior(beta: &[f64], fisher: &[f64]) -> Result<GaussianPosterior> {
    let q = beta.len();
    if fisher.len() != q * q {
        return Err(Error::shape("laplace_posterior", format!("fisher len {}", fisher.len())));
    }
    let chol = cholesky(fisher, q)?;
    Ok(GaussianPosterior { mean: beta.to_vec(), precision: fisher.to_vec(), chol })
}

#[derive(Debug, Clone)]
pub struct McmcResult {
    /// Post-burn-in draws, `[kept, q]` row-major.
    pub draws: Vec<f64>,
    pub kept: usize,
    pub q: usize,
    pub acceptance_rate: f64,
    pub proposal_scale: f64,
}

impl McmcResult {
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.kept).map(|i| self.draws[i * self.q + j]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.q];
        for i in 0..self.kept {
            for j in 0..self.q {
                mean[j] += self.draws[i * self.q + j];
            }
        }
        for v in mean.iter_mut() {
            *v /= self.kept as f64;
        }
        mean
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        let mean = self.posterior_mean();
        let mut var = vec![0.0; self.q];
        for i in 0..self.kept {
            for j in 0..self.q {
                let d = self.draws[i * self.q + j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter().map(|v| (v / (self.kept - 1) as f64).sqrt()).collect()
    }

    /// Batch-means Monte Carlo standard error of each posterior mean.
    pub fn mc_standard_error(&self) -> Vec<f64> {
        let batches = 50.min(self.kept / 2).max(2);
        let per = self.kept / batches;
        let mut out = Vec::with_capacity(self.q);
        for j in 0..self.q {
            let col = self.column(j);
            let means: Vec<f64> = (0..batches)
                .map(|b| col[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / batches as f64;
            let var =
                means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
            out.push((var / batches as f64).sqrt());
        }
        out
    }
}

/// Random-walk Metropolis targeting `likelihood x N(0, prior_sd^2 I)`.
///
/// The isotropic proposal scale adapts toward 0.234 acceptance during
/// burn-in and is frozen afterwards. Gaussian likelihoods use `dispersion`
/// as the (known) response variance.
pub fn mcmc_oracle(
    data: &GlmDataset,
    prior_sd: f64,
    iterations: usize,
    burn_in: usize,
    stream: &mut RngStream,
    dispersion: f64,
) -> Result<McmcResult> {
    if iterations <= burn_in {
        return Err(Error::InvalidConfig(format!(
            "iterations {iterations} must exceed burn-in {burn_in}"
        )));
    }
    if prior_sd <= 0.0 {
        return Err(Error::domain("mcmc_oracle", "prior sd must be positive"));
    }
    let q = data.q;
    let log_post = |beta: &[f64]| -> Result<f64> {
        let ll = log_likelihood(data, beta, dispersion)?;
        let prior: f64 = beta.iter().map(|b| -b * b / (2.0 * prior_sd * prior_sd)).sum();
        Ok(ll + prior)
    };

    let mut beta = vec![0.0; q];
    let mut current = log_post(&beta)?;
    let mut scale = 0.1;
    let mut proposal = vec![0.0; q];
    let kept = iterations - burn_in;
    let mut draws = vec![0.0; kept * q];
    let mut accepted_total = 0usize;
    let mut accepted_window = 0usize;
    const WINDOW: usize = 50;

    for it in 0..iterations {
        for (p, b) in proposal.iter_mut().zip(&beta) {
            *p = b + scale * stream.standard_normal();
        }
        let cand = log_post(&proposal)?;
        let accept = cand - current >= 0.0 || stream.uniform().ln() < cand - current;
        if accept {
            beta.copy_from_slice(&proposal);
            current = cand;
            accepted_total += 1;
            accepted_window += 1;
        }
        if it < burn_in && (it + 1) % WINDOW == 0 {
            let rate = accepted_window as f64 / WINDOW as f64;
            scale *= ((rate - 0.234) * 0.7).exp();
            scale = scale.clamp(1e-6, 10.0);
            accepted_window = 0;
        }
        if it >= burn_in {
            draws[(it - burn_in) * q..(it - burn_in + 1) * q].copy_from_slice(&beta);
        }
    }

    Ok(McmcResult {
        draws,
        kept,
        q,
        acceptance_rate: accepted_total as f64 / iterations as f64,
        proposal_scale: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn gaussian_intercept_only_is_sample_mean() {
        let data =
            GlmDataset::new(vec![1.0, 1.0], 2, 1, vec![1.0, 3.0], GlmFamily::Gaussian).unwrap();
        let fit = irls_fit(&data).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_intercept_only_closed_form() {
        let data = GlmDataset::new(vec![1.0, 1.0, 1.0], 3, 1, vec![1.0, 2.0, 3.0], GlmFamily::Poisson)
            .unwrap();
        let fit = irls_fit(&data).unwrap();
        assert!((fit.beta[0] - 2.0f64.ln()).abs() < 1e-10, "beta {}", fit.beta[0]);
        // Fisher information: sum of fitted means = 3 * 2 = 6
        assert!((fit.fisher[0] - 6.0).abs() < 1e-8, "fisher {}", fit.fisher[0]);
    }

    #[test]
    fn bernoulli_constant_response_separates() {
        let design = vec![1.0; 8];
        let data = GlmDataset::new(design, 8, 1, vec![1.0; 8], GlmFamily::Bernoulli).unwrap();
        match irls_fit(&data) {
            Err(Error::Separation { .. }) => {}
            other => panic!("expected Separation, got {other:?}"),
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(GlmDataset::new(vec![1.0], 1, 1, vec![0.5], GlmFamily::Bernoulli).is_err());
        assert!(GlmDataset::new(vec![1.0], 1, 1, vec![-1.0], GlmFamily::Poisson).is_err());
        assert!(GlmDataset::new(vec![1.0], 1, 1, vec![1.5], GlmFamily::Poisson).is_err());
        assert!(GlmDataset::new(vec![f64::NAN], 1, 1, vec![0.0], GlmFamily::Gaussian).is_err());
    }

    #[test]
    fn log_likelihood_closed_forms() {
        let b = GlmDataset::new(vec![1.0], 1, 1, vec![1.0], GlmFamily::Bernoulli).unwrap();
        let v = log_likelihood(&b, &[0.0], 1.0).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);

        let p = GlmDataset::new(vec![1.0], 1, 1, vec![0.0], GlmFamily::Poisson).unwrap();
        let v = log_likelihood(&p, &[0.0], 1.0).unwrap();
        assert!((v + 1.0).abs() < 1e-14);

        let g = GlmDataset::new(vec![1.0], 1, 1, vec![0.7], GlmFamily::Gaussian).unwrap();
        let v = log_likelihood(&g, &[0.7], 1.0).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn ln_factorial_consistency() {
        // direct-sum and Stirling branches agree where they meet
        let exact: f64 = (2..=300u64).map(|v| (v as f64).ln()).sum();
        assert!((ln_factorial(300.0) - exact).abs() < 1e-8);
        assert_eq!(ln_factorial(0.0), 0.0);
        assert_eq!(ln_factorial(1.0), 0.0);
    }

    fn synthetic_poisson(n: usize, seed: u64) -> GlmDataset {
        let rng = SeededRng::new(seed);
        let mut s = rng.stream("design", 0);
        let q = 3;
        let mut design = vec![0.0; n * q];
        for i in 0..n {
            design[i * q] = 1.0;
            design[i * q + 1] = s.standard_normal() * 0.5;
            design[i * q + 2] = s.standard_normal() * 0.5;
        }
        let beta = [0.3, 0.8, -0.5];
        let mut noise = rng.stream("y", 0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..q).map(|j| design[i * q + j] * beta[j]).sum();
                noise.poisson(eta.exp())
            })
            .collect();
        GlmDataset::new(design, n, q, y, GlmFamily::Poisson).unwrap()
    }

    #[test]
    fn score_equation_holds_at_mle() {
        let data = synthetic_poisson(400, 3);
        let fit = irls_fit(&data).unwrap();
        let mut eta = vec![0.0; data.n];
        data.linear_predictor(&fit.beta, &mut eta);
        for a in 0..data.q {
            let score: f64 = (0..data.n)
                .map(|i| data.row(i)[a] * (data.y[i] - data.family.inverse_link(eta[i])))
                .sum();
            assert!(score.abs() < 1e-6, "score[{a}] = {score}");
        }
    }

    #[test]
    fn fisher_matches_finite_difference_hessian() {
        for (data, disp) in [
            (synthetic_poisson(200, 4), 1.0),
            {
                let d = synthetic_gaussian(200, 5);
                let phi = irls_fit(&d).unwrap().dispersion;
                (d, phi)
            },
        ] {
            let fit = irls_fit(&data).unwrap();
            let q = data.q;
            let h = 1e-4;
            for a in 0..q {
                for b in 0..q {
                    let mut bp = fit.beta.clone();
                    bp[a] += h;
                    bp[b] += h;
                    let lpp = log_likelihood(&data, &bp, disp).unwrap();
                    let mut bm = fit.beta.clone();
                    bm[a] += h;
                    bm[b] -= h;
                    let lpm = log_likelihood(&data, &bm, disp).unwrap();
                    let mut bq = fit.beta.clone();
                    bq[a] -= h;
                    bq[b] += h;
                    let lmp = log_likelihood(&data, &bq, disp).unwrap();
                    let mut br = fit.beta.clone();
                    br[a] -= h;
                    br[b] -= h;
                    let lmm = log_likelihood(&data, &br, disp).unwrap();
                    let hess = -(lpp - lpm - lmp + lmm) / (4.0 * h * h);
                    let scale = fit.fisher.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(
                        (hess - fit.fisher[a * q + b]).abs() < 1e-6 * scale.max(1.0),
                        "H[{a},{b}] fd {} vs fisher {}",
                        hess,
                        fit.fisher[a * q + b]
                    );
                }
            }
        }
    }

    fn synthetic_gaussian(n: usize, seed: u64) -> GlmDataset {
        let rng = SeededRng::new(seed);
        let mut s = rng.stream("design", 0);
        let q = 3;
        let mut design = vec![0.0; n * q];
        for i in 0..n {
            design[i * q] = 1.0;
            design[i * q + 1] = s.standard_normal();
            design[i * q + 2] = s.standard_normal();
        }
        let beta = [0.5, 1.0, -1.0];
        let mut noise = rng.stream("y", 0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..q).map(|j| design[i * q + j] * beta[j]).sum();
                eta + noise.standard_normal()
            })
            .collect();
        GlmDataset::new(design, n, q, y, GlmFamily::Gaussian).unwrap()
    }

    #[test]
    fn rank_deficient_design_falls_back_to_ridge() {
        // duplicated column
        let n = 20;
        let rng = SeededRng::new(6);
        let mut s = rng.stream("x", 0);
        let mut design = vec![0.0; n * 3];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let v = s.standard_normal();
            design[i * 3] = 1.0;
            design[i * 3 + 1] = v;
            design[i * 3 + 2] = v;
            y[i] = v + 0.1 * s.standard_normal();
        }
        let data = GlmDataset::new(design, n, 3, y, GlmFamily::Gaussian).unwrap();
        let fit = irls_fit(&data).unwrap();
        assert!(fit.ridge > 0.0);
        assert!(fit.beta.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn laplace_scalar_and_sampling_covariance() {
        let post = laplace_posterior(&[1.5], &[4.0]).unwrap();
        assert_eq!(post.mean, vec![1.5]);
        assert!((post.marginal_sd()[0] - 0.5).abs() < 1e-12);

        let ident = laplace_posterior(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut stream = SeededRng::new(7).stream("draws", 0);
        let n = 100_000;
        let draws = ident.draw(&mut stream, n);
        let mut cov = [0.0f64; 4];
        for i in 0..n {
            let (a, b) = (draws[i * 2], draws[i * 2 + 1]);
            cov[0] += a * a;
            cov[1] += a * b;
            cov[3] += b * b;
        }
        for c in cov.iter_mut() {
            *c /= n as f64;
        }
        assert!((cov[0] - 1.0).abs() < 0.02, "var1 {}", cov[0]);
        assert!((cov[3] - 1.0).abs() < 0.02, "var2 {}", cov[3]);
        assert!(cov[1].abs() < 0.02, "cov {}", cov[1]);
    }

    #[test]
    fn mcmc_conjugate_gaussian_posterior() {
        // intercept-only, unit variance, N(0,1) prior:
        // posterior N(n*ybar/(n+1), 1/(n+1))
        let n = 40;
        let rng = SeededRng::new(8);
        let mut noise = rng.stream("y", 0);
        let y: Vec<f64> = (0..n).map(|_| 1.2 + noise.standard_normal()).collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let data = GlmDataset::new(vec![1.0; n], n, 1, y, GlmFamily::Gaussian).unwrap();
        let res =
            mcmc_oracle(&data, 1.0, 60_000, 10_000, &mut rng.stream("mcmc", 0), 1.0).unwrap();
        let exp_mean = n as f64 * ybar / (n as f64 + 1.0);
        let exp_sd = (1.0 / (n as f64 + 1.0)).sqrt();
        let mean = res.posterior_mean()[0];
        let se = res.mc_standard_error()[0];
        assert!(
            (mean - exp_mean).abs() < 3.0 * se,
            "mean {mean} vs conjugate {exp_mean} (se {se})"
        );
        let sd = res.posterior_sd()[0];
        assert!((sd - exp_sd).abs() / exp_sd < 0.1, "sd {sd} vs {exp_sd}");
    }

    #[test]
    fn mcmc_rejects_empty_keep() {
        let data = GlmDataset::new(vec![1.0], 1, 1, vec![0.0], GlmFamily::Gaussian).unwrap();
        let mut s = SeededRng::new(1).stream("m", 0);
        assert!(mcmc_oracle(&data, 1.0, 100, 100, &mut s, 1.0).is_err());
    }
}
