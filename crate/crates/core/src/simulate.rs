//! Synthetic data generation: Matern Gaussian-process image fields on a
//! regular lattice, inverse-quadratic filter banks, the induced true
//! features, family responses, a thin-plate spline basis, and a small
//! two-layer tanh generator for the dense-only pipeline check.
//!
//! Lattice pixels sit at integer coordinates `(0..height-1, 0..width-1)`
//! with unit spacing; focal points are given in the same coordinates and may
//! fall off-grid.

use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::linalg::{cholesky, CholeskyFactor};
use crate::rng::{RngStream, SeededRng};
use crate::tensor::Tensor;

/// Matern covariance parameters (half-integer smoothness only).
#[derive(Debug, Clone, Copy)]
pub struct MaternParams {
    pub variance: f64,
    pub smoothness: f64,
    pub range: f64,
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        if self.variance <= 0.0 || self.range <= 0.0 || self.smoothness <= 0.0 {
            return Err(Error::domain("MaternParams", "all parameters must be positive"));
        }
        Ok(())
    }
}

/// Matern covariance at distance `d`, closed half-integer forms:
/// `nu = 1/2` is `s2 exp(-x)`, `nu = 3/2` is `s2 (1 + x) exp(-x)`,
/// `nu = 5/2` is `s2 (x^2 + 3x + 3)/3 exp(-x)` with `x = d / range`.
pub fn matern_cov(d: f64, params: &MaternParams) -> Result<f64> {
    params.validate()?;
    if d < 0.0 {
        return Err(Error::domain("matern_cov", format!("negative distance {d}")));
    }
    let x = d / params.range;
    let s2 = params.variance;
    if (params.smoothness - 0.5).abs() < 1e-12 {
        Ok(s2 * (-x).exp())
    } else if (params.smoothness - 1.5).abs() < 1e-12 {
        Ok(s2 * (1.0 + x) * (-x).exp())
    } else if (params.smoothness - 2.5).abs() < 1e-12 {
        Ok(s2 * (x * x + 3.0 * x + 3.0) / 3.0 * (-x).exp())
    } else {
        Err(Error::UnsupportedSmoothness(params.smoothness))
    }
}

/// Dense covariance over all lattice pixels in row-major order.
pub fn lattice_covariance(height: usize, width: usize, params: &MaternParams) -> Result<Vec<f64>> {
    let n = height * width;
    let mut cov = vec![0.0; n * n];
    for a in 0..n {
        let (ai, aj) = ((a / width) as f64, (a % width) as f64);
        for b in a..n {
            let (bi, bj) = ((b / width) as f64, (b % width) as f64);
            let d = ((ai - bi).powi(2) + (aj - bj).powi(2)).sqrt();
            let v = matern_cov(d, params)?;
            cov[a * n + b] = v;
            cov[b * n + a] = v;
        }
    }
    Ok(cov)
}

/// Shared Cholesky factor of the lattice covariance, reused across images.
pub fn lattice_factor(height: usize, width: usize, params: &MaternParams) -> Result<CholeskyFactor> {
    let cov = lattice_covariance(height, width, params)?;
    cholesky(&cov, height * width)
}

/// Samples `n` i.i.d. GP images on the lattice: each is `L z` with `z`
/// standard normal, reshaped to `[height, width]`. Image `i` uses the
/// substream `("gp-image", i)`.
pub fn sample_gp_images(
    height: usize,
    width: usize,
    params: &MaternParams,
    n: usize,
    rng: &SeededRng,
) -> Result<Tensor> {
    let factor = lattice_factor(height, width, params)?;
    let pix = height * width;
    let mut data = vec![0.0; n * pix];
    let mut z = vec![0.0; pix];
    for i in 0..n {
        let mut s = rng.stream("gp-image", i as u64);
        s.fill_standard_normal(&mut z);
        factor.multiply_lower(&z, &mut data[i * pix..(i + 1) * pix]);
    }
    Tensor::new(vec![n, height, width], data)
}

/// Inverse-quadratic filters `K_c[i,j] = 1 / (1 + (delta d)^2)` where `d`
/// is the pixel's distance to the focal point.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub height: usize,
    pub width: usize,
    /// Per filter: `[height * width]` row-major values in (0, 1].
    pub filters: Vec<Vec<f64>>,
    pub focal_points: Vec<(f64, f64)>,
    pub delta: f64,
}

/// Focal points for the lattice experiments; the first two pick out the
/// top-left and lower-right regions, which is also the pair used for count
/// responses.
pub const LATTICE_FOCALS: [(f64, f64); 4] = [(0.0, 0.0), (10.0, 20.0), (15.0, 15.0), (30.0, 30.0)];

/// The filter decay used throughout the lattice experiments.
pub const LATTICE_DELTA: f64 = 0.1;

pub fn inverse_quadratic(d: f64, delta: f64) -> f64 {
    1.0 / (1.0 + (delta * d) * (delta * d))
}

pub fn build_filters(
    height: usize,
    width: usize,
    focal_points: &[(f64, f64)],
    delta: f64,
) -> Result<FilterBank> {
    if delta <= 0.0 {
        return Err(Error::domain("build_filters", format!("delta {delta} must be positive")));
    }
    let mut filters = Vec::with_capacity(focal_points.len());
    for &(fi, fj) in focal_points {
        let mut k = vec![0.0; height * width];
        for i in 0..height {
            for j in 0..width {
                let d = ((i as f64 - fi).powi(2) + (j as f64 - fj).powi(2)).sqrt();
                k[i * width + j] = inverse_quadratic(d, delta);
            }
        }
        filters.push(k);
    }
    Ok(FilterBank { height, width, filters, focal_points: focal_points.to_vec(), delta })
}

/// True features: `Phi[n,c]` is the mean over pixels of `K_c * X_n`
/// elementwise.
pub fn true_features(images: &Tensor, bank: &FilterBank) -> Result<Tensor> {
    let shape = images.shape();
    if shape.len() != 3 || shape[1] != bank.height || shape[2] != bank.width {
        return Err(Error::shape(
            "true_features",
            format!("images {shape:?} vs filters {}x{}", bank.height, bank.width),
        ));
    }
    let n = shape[0];
    let c = bank.filters.len();
    let pix = bank.height * bank.width;
    let mut phi = vec![0.0; n * c];
    for i in 0..n {
        let img = images.slice(i);
        for (ci, filter) in bank.filters.iter().enumerate() {
            let mut acc = 0.0;
            for (k, x) in filter.iter().zip(img) {
                acc += k * x;
            }
            phi[i * c + ci] = acc / pix as f64;
        }
    }
    Tensor::new(vec![n, c], phi)
}

/// Upper guard on Poisson intensities; beyond this the draw is reported as a
/// domain error instead of producing astronomically dispersed counts.
pub const POISSON_INTENSITY_CAP: f64 = 1e6;

/// Linear predictor of the lattice designs: row-sum of the true features
/// plus `Z gamma`.
pub fn linear_predictor(phi: &Tensor, z: &Tensor, gamma: &[f64]) -> Result<Vec<f64>> {
    let n = phi.outer();
    if z.outer() != n || z.shape()[1] != gamma.len() {
        return Err(Error::shape(
            "linear_predictor",
            format!("z {:?} vs gamma len {}", z.shape(), gamma.len()),
        ));
    }
    let mut lp = vec![0.0; n];
    for i in 0..n {
        lp[i] = phi.slice(i).iter().sum::<f64>() + crate::tensor::dot(z.slice(i), gamma);
    }
    Ok(lp)
}

/// Draws responses at natural parameter `lambda = g^{-1}(linear predictor)`:
/// Gaussian adds unit noise, Bernoulli uses the logistic probability,
/// Poisson samples counts at intensity `exp(lp)` (hard error above the cap).
pub fn generate_responses(
    lp: &[f64],
    family: GlmFamily,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut y = Vec::with_capacity(lp.len());
    for (i, &eta) in lp.iter().enumerate() {
        let v = match family {
            GlmFamily::Gaussian => eta + stream.standard_normal(),
            GlmFamily::Bernoulli => {
                let p = GlmFamily::Bernoulli.inverse_link(eta);
                if stream.uniform() < p {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => {
                let intensity = eta.exp();
                if intensity > POISSON_INTENSITY_CAP {
                    return Err(Error::domain(
                        "generate_responses",
                        format!("Poisson intensity {intensity:.3e} at row {i} exceeds cap"),
                    ));
                }
                stream.poisson(intensity)
            }
        };
        y.push(v);
    }
    Ok(y)
}

/// Thin-plate spline basis: entry `(n, j)` is `r^2 ln r` with
/// `r = ||s_n - u_j||`, defined as 0 at `r = 0` by the continuous limit.
pub fn thin_plate_basis(locations: &[(f64, f64)], knots: &[(f64, f64)]) -> Result<Tensor> {
    if knots.is_empty() || locations.is_empty() {
        return Err(Error::shape("thin_plate_basis", "locations and knots must be nonempty"));
    }
    let mut data = vec![0.0; locations.len() * knots.len()];
    for (i, s) in locations.iter().enumerate() {
        for (j, u) in knots.iter().enumerate() {
            let r = ((s.0 - u.0).powi(2) + (s.1 - u.1).powi(2)).sqrt();
            data[i * knots.len() + j] = if r > 0.0 { r * r * r.ln() } else { 0.0 };
        }
    }
    Tensor::new(vec![locations.len(), knots.len()], data)
}

/// Weights of the fixed two-layer tanh generator.
pub const SIMPLE_NN_WEIGHTS: [f64; 12] = [1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 0.5, 0.8, 1.1, 0.5, 1.0, 1.5];
pub const SIMPLE_NN_BIASES: [f64; 4] = [0.2, 0.2, 0.2, 0.3];
pub const SIMPLE_NN_GAMMA: [f64; 2] = [1.0, 2.0];

/// Mean function of the simple generator for one `(x, z)` row.
pub fn simple_nn_mean(x: &[f64], z: &[f64]) -> f64 {
    let w = &SIMPLE_NN_WEIGHTS;
    let b = &SIMPLE_NN_BIASES;
    let o1 = (x[0] * w[0] + x[1] * w[1] + x[2] * w[2] + b[0]).tanh();
    let o2 = (x[0] * w[3] + x[1] * w[4] + x[2] * w[5] + b[1]).tanh();
    let o3 = (x[0] * w[6] + x[1] * w[7] + x[2] * w[8] + b[2]).tanh();
    o1 * w[9] + o2 * w[10] + o3 * w[11] + z[0] * SIMPLE_NN_GAMMA[0] + z[1] * SIMPLE_NN_GAMMA[1] + b[3]
}

/// Draws `(X, Z, Y)` from the simple generator: standard-normal inputs,
/// `Y ~ N(mu, 1)` with `mu` the exact two-layer tanh construction.
pub fn simple_nn_generate(n: usize, rng: &SeededRng) -> Result<(Tensor, Tensor, Tensor)> {
    if n == 0 {
        return Err(Error::shape("simple_nn_generate", "n must be positive"));
    }
    let mut sx = rng.stream("simple-x", 0);
    let mut sz = rng.stream("simple-z", 0);
    let mut sy = rng.stream("simple-y", 0);
    let mut x = vec![0.0; n * 3];
    let mut z = vec![0.0; n * 2];
    let mut y = vec![0.0; n];
    sx.fill_standard_normal(&mut x);
    sz.fill_standard_normal(&mut z);
    for i in 0..n {
        let mu = simple_nn_mean(&x[i * 3..(i + 1) * 3], &z[i * 2..(i + 1) * 2]);
        y[i] = mu + sy.standard_normal();
    }
    Ok((
        Tensor::new(vec![n, 3], x)?,
        Tensor::new(vec![n, 2], z)?,
        Tensor::new(vec![n], y)?,
    ))
}
