// SPDX-License-Identifier: MIT OR Apache-2.0

//! Thin row-major wrappers over `faer` for the handful of dense kernels the
//! rest of the crate needs (SVD, QR, products, symmetric eigenvalues).

use faer::{Mat, MatRef, Side};

use crate::error::{shape, Error, Result};
use crate::tensor::DenseTensor;

fn to_faer(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    debug_assert_eq!(rows * cols, data.len());
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Thin SVD `M = U · diag(s) · Vt`, all factors row-major.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub rows: usize,
    pub cols: usize,
    /// `rows × k`
    pub u: Vec<f64>,
    /// non-increasing, length `k = min(rows, cols)`
    pub s: Vec<f64>,
    /// `k × cols`
    pub vt: Vec<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

pub fn thin_svd(rows: usize, cols: usize, data: &[f64]) -> Result<ThinSvd> {
    let m = to_faer(rows, cols, data);
    let svd = m.thin_svd().map_err(|e| Error::Numerical(format!("svd of {rows}x{cols} failed: {e:?}")))?;
    let k = rows.min(cols);
    let s: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i]).collect();
    let u = to_row_major(svd.U());
    let v = svd.V();
    let mut vt = Vec::with_capacity(k * cols);
    for a in 0..k {
        for j in 0..cols {
            vt.push(v[(j, a)]);
        }
    }
    Ok(ThinSvd { rows, cols, u, s, vt })
}

/// Singular values, non-increasing.
pub fn singular_values(rows: usize, cols: usize, data: &[f64]) -> Result<Vec<f64>> {
    let m = to_faer(rows, cols, data);
    m.singular_values().map_err(|e| Error::Numerical(format!("singular values of {rows}x{cols} failed: {e:?}")))
}

pub fn matrix_singular_values(m: &DenseTensor) -> Result<Vec<f64>> {
    let (r, c) = m.shape2()?;
    singular_values(r, c, m.data())
}

/// Eigenvalues of a symmetric matrix, non-increasing.
pub fn symmetric_eigenvalues(m: &DenseTensor) -> Result<Vec<f64>> {
    let (r, c) = m.shape2()?;
    if r != c {
        return Err(shape(format!("eigenvalues need a square matrix, got {r}x{c}")));
    }
    let mut ev = to_faer(r, c, m.data())
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    ev.reverse();
    Ok(ev)
}

pub fn matmul_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let fa = to_faer(m, k, a);
    let fb = to_faer(k, n, b);
    let c = &fa * &fb;
    to_row_major(c.as_ref())
}

pub fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (m, k) = a.shape2()?;
    let (k2, n) = b.shape2()?;
    if k != k2 {
        return Err(shape(format!("cannot multiply {m}x{k} by {k2}x{n}")));
    }
    DenseTensor::matrix(m, n, matmul_raw(a.data(), m, k, b.data(), n))
}

pub fn transpose(a: &DenseTensor) -> Result<DenseTensor> {
    let (r, c) = a.shape2()?;
    DenseTensor::matrix_from_fn(c, r, |i, j| a.at(j, i))
}

/// `M · Mᵀ`.
pub fn gram_rows(a: &DenseTensor) -> Result<DenseTensor> {
    let (r, c) = a.shape2()?;
    let fa = to_faer(r, c, a.data());
    let g = &fa * fa.transpose();
    DenseTensor::matrix(r, r, to_row_major(g.as_ref()))
}

/// Orthonormalize the rows of a `rows × cols` matrix (`rows ≤ cols`) through a
/// thin QR of its transpose.
pub fn orthonormalize_rows(a: &DenseTensor) -> Result<DenseTensor> {
    let (r, c) = a.shape2()?;
    if r > c {
        return Err(shape(format!("cannot orthonormalize {r} rows in dimension {c}")));
    }
    let at = Mat::from_fn(c, r, |i, j| a.at(j, i));
    let q = at.qr().compute_thin_Q();
    DenseTensor::matrix_from_fn(r, c, |i, j| q[(j, i)])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn relative_frobenius_error(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = exact.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}
