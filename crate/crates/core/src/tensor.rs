// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major tensors and prime-factor tensorization of matrices.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Row-major real tensor. An order-0 tensor (empty `dims`) holds one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(invalid(format!("dimension {pos} is zero in {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(shape(format!("dims {dims:?} need {expected} elements, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![0.0; len])
    }

    pub fn from_f32(dims: Vec<usize>, data: &[f32]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&x| f64::from(x)).collect())
    }

    /// Order-2 tensor from a row-major buffer.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn matrix_from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::matrix(rows, cols, data)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::matrix_from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)` of an order-2 tensor.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(invalid(format!("expected an order-2 tensor, got dims {other:?}"))),
        }
    }

    /// Element `(i, j)` of an order-2 tensor. Panics when out of range.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.dims.len(), 2);
        self.data[i * self.dims[1] + j]
    }

    /// Same payload under new dims.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }
}

/// Prime factors of `n` in non-decreasing order; `[]` for `n = 1`.
pub fn prime_factorize(n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(invalid("cannot factorize 0"));
    }
    let mut rest = n;
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= rest {
        while rest.is_multiple_of(p) {
            out.push(p);
            rest /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if rest > 1 {
        out.push(rest);
    }
    Ok(out)
}

/// Site dimensions of a tensorized matrix: output (row) sites first, then
/// input (column) sites. The row–column cut sits after `out_sites.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteLayout {
    pub out_sites: Vec<usize>,
    pub in_sites: Vec<usize>,
}

impl SiteLayout {
    pub fn for_matrix(d_out: usize, d_in: usize) -> Result<Self> {
        Ok(Self { out_sites: prime_factorize(d_out)?, in_sites: prime_factorize(d_in)? })
    }

    pub fn d_out(&self) -> usize {
        self.out_sites.iter().product()
    }

    pub fn d_in(&self) -> usize {
        self.in_sites.iter().product()
    }

    pub fn sites(&self) -> Vec<usize> {
        self.out_sites.iter().chain(&self.in_sites).copied().collect()
    }

    pub fn n_sites(&self) -> usize {
        self.out_sites.len() + self.in_sites.len()
    }

    /// Bond index of the row–column bipartition.
    pub fn row_column_cut(&self) -> usize {
        self.out_sites.len()
    }
}

/// Reshape an order-2 tensor into its order-(n+m) prime-site tensor.
/// The payload is shared verbatim; only the dims change.
pub fn tensorize(matrix: &DenseTensor) -> Result<(SiteLayout, DenseTensor)> {
    let (rows, cols) = matrix.shape2()?;
    let layout = SiteLayout::for_matrix(rows, cols)?;
    let tensor = DenseTensor::new(layout.sites(), matrix.data().to_vec())?;
    Ok((layout, tensor))
}

pub fn flatten_row_major(tensor: &DenseTensor) -> Vec<f64> {
    tensor.data().to_vec()
}
