//! Small dense linear-algebra kernel: Cholesky with a jitter ladder,
//! triangular solves, SPD inversion, and a Jacobi eigensolver.
//!
//! Matrices are row-major `n x n` slices. The jitter ladder exists because
//! large Matern covariance matrices and near-collinear feature Gram matrices
//! sit close to the positive-definite boundary: factorization is attempted
//! with diagonal boosts of 0, 1e-10, 1e-8, and 1e-6 times `trace/n`, and the
//! boost that succeeded is recorded on the factor.

use crate::error::{Error, Result};

const SYMMETRY_RTOL: f64 = 1e-10;
const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor `L` with `L L^T = A + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub n: usize,
    /// Row-major lower triangle (upper entries zero).
    pub lower: Vec<f64>,
    /// Diagonal boost that was needed; 0 for well-conditioned input.
    pub jitter: f64,
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn factor_in_place(a: &[f64], n: usize, jitter: f64) -> std::result::Result<Vec<f64>, (f64, usize)> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err((sum, i));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// The input must be symmetric to `1e-10` relative; the jitter ladder is
/// walked before giving up with `NotPositiveDefinite`.
pub fn cholesky(a: &[f64], n: usize) -> Result<CholeskyFactor> {
    assert_eq!(a.len(), n * n, "cholesky wants a square matrix");
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            max_asym = max_asym.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    if max_asym > SYMMETRY_RTOL * scale {
        return Err(Error::NotSymmetric { max_asym });
    }

    // SPD matrices have a strictly positive diagonal; bail out before the
    // ladder can mask an all-zero or negative-diagonal input.
    for i in 0..n {
        if a[i * n + i] <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: a[i * n + i], index: i });
        }
    }
    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    let unit = trace / n as f64;
    let mut last_failure = (0.0, 0usize);
    for &level in JITTER_LADDER.iter() {
        let jitter = level * unit;
        match factor_in_place(a, n, jitter) {
            Ok(lower) => return Ok(CholeskyFactor { n, lower, jitter }),
            Err(fail) => last_failure = fail,
        }
    }
    Err(Error::NotPositiveDefinite { pivot: last_failure.0, index: last_failure.1 })
}

/// Cholesky without the jitter ladder and with a relative pivot floor of
/// `n * eps * max(diag)`; near-singular inputs fail instead of being
/// absorbed, which is what rank-deficiency detection needs.
pub fn cholesky_rank_checked(a: &[f64], n: usize) -> Result<CholeskyFactor> {
    assert_eq!(a.len(), n * n);
    let mut max_diag = 0.0f64;
    for i in 0..n {
        if a[i * n + i] <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: a[i * n + i], index: i });
        }
        max_diag = max_diag.max(a[i * n + i]);
    }
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= floor || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: sum, index: i });
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(CholeskyFactor { n, lower: l, jitter: 0.0 })
}

impl CholeskyFactor {
    /// Solves `L x = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.lower[i * n + k] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// Solves `L^T x = b` (back substitution).
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in i + 1..n {
                sum -= self.lower[k * n + i] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// Solves `A x = b` via the two triangular solves.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `y = L z`; used to color standard-normal draws.
    pub fn multiply_lower(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            let mut acc = 0.0;
            for (l, zv) in row.iter().zip(z.iter()) {
                acc += l * zv;
            }
            out[i] = acc;
        }
    }

    /// Full inverse of `A`, symmetric by construction.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize away round-off
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }

    /// log det A = 2 sum log diag(L).
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.lower[i * self.n + i].ln()).sum::<f64>() * 2.0
    }
}

/// Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order with matching eigenvectors as
/// columns of the returned `n x n` matrix. Adequate for the small feature
/// covariance matrices handed to the PCA reporting utility.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[i * n + j].abs());
            }
        }
        let scale = max_abs(&m).max(f64::MIN_POSITIVE);
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + newc] = v[r * n + oldc];
        }
    }
    (values, vectors)
}
