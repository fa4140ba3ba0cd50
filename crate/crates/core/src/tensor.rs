//! Dense row-major `f64` tensors.
//!
//! `Tensor` is the value carrier for images, covariates, responses, network
//! parameters, and feature draws. Data is stored row-major (last index
//! fastest) and the element count always equals the product of the extents.
//! Tensors are immutable once handed out and safe to share read-only across
//! worker threads.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the data length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape("Tensor::new", format!("zero extent in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {:?} wants {} values, got {}", shape, len, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn scalar_filled(shape: Vec<usize>, value: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![value; len] }
    }

    /// 2-D constructor from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if r == 0 || c == 0 {
            return Err(Error::shape("Tensor::from_rows", "empty rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("Tensor::from_rows", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of leading-axis slices (rows for matrices, images for stacks).
    pub fn outer(&self) -> usize {
        self.shape[0]
    }

    /// Length of one leading-axis slice.
    pub fn inner_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Borrow the `i`-th leading-axis slice.
    pub fn slice(&self, i: usize) -> &[f64] {
        let w = self.inner_len();
        &self.data[i * w..(i + 1) * w]
    }

    /// Element access for 2-D tensors.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Reshape without copying; the element count must be preserved.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshaped",
                format!("cannot view {} values as {:?}", self.data.len(), shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Restricts to the first `n` leading-axis slices.
    pub fn take_outer(&self, n: usize) -> Result<Tensor> {
        if n == 0 || n > self.outer() {
            return Err(Error::shape(
                "Tensor::take_outer",
                format!("{} of {} slices", n, self.outer()),
            ));
        }
        let w = self.inner_len();
        let mut shape = self.shape.clone();
        shape[0] = n;
        Tensor::new(shape, self.data[..n * w].to_vec())
    }

    /// Restricts to leading-axis slices `[start, end)`.
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.outer() {
            return Err(Error::shape(
                "Tensor::slice_outer",
                format!("range {start}..{end} of {}", self.outer()),
            ));
        }
        let w = self.inner_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor::new(shape, self.data[start * w..end * w].to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[m x n] = a[m x k] * b[k x n]`, all row-major. `out` is overwritten.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m x n] += a^T[m x k]^T ... ` — accumulates `a^T * b` where
/// `a` is `k x m` and `b` is `k x n` (both row-major).
pub fn matmul_at_b(k: usize, m: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m x n] = a[m x k] * b^T` where `b` is `n x k` row-major.
pub fn matmul_a_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow.iter()) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
