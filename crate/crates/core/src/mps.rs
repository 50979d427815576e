// SPDX-License-Identifier: MIT OR Apache-2.0

//! Left-to-right sequential-SVD sweep of a tensor into a matrix product state.
//!
//! At bond `k` the carried matrix has rows `(χ_{k-1}, d_k)` and columns
//! `(d_{k+1}, …, d_N)`. Its SVD gives the left-canonical core `U` and the
//! Schmidt values at that cut; `diag(s)·Vᵀ` is carried to the next site. When
//! nothing is truncated the recorded singular values are exactly the Schmidt
//! values of the bipartition (sites `1..=k` | `k+1..=N`), because every core
//! to the left is an isometry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Result};
use crate::linalg::{matmul_raw, singular_values, thin_svd};
use crate::tensor::DenseTensor;

/// Singular values at or below this fraction of the largest one at a bond are
/// treated as exact zeros.
pub const ZERO_CUTOFF: f64 = 1e-12;

/// Unnormalized Schmidt values at one bipartition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    /// Number of sites on the left of the cut (1-based bond index).
    pub cut: usize,
    pub d_left: usize,
    pub d_right: usize,
    /// Non-increasing, non-negative.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsChain {
    /// Order-3 cores with dims `(χ_{k-1}, d_k, χ_k)`.
    pub cores: Vec<DenseTensor>,
    /// `bond_spectra[k - 1]` holds the retained singular values at bond `k`.
    pub bond_spectra: Vec<Vec<f64>>,
    pub chi_max: Option<usize>,
    site_dims: Vec<usize>,
}

impl MpsChain {
    /// Dims of the tensor this chain represents.
    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bond_spectra.len()
    }

    /// Internal bond dimensions `χ_1 … χ_{N-1}`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1].iter().map(|c| c.dims()[2]).collect()
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// Spectrum at bond `cut` (`1 ≤ cut ≤ N-1`).
    pub fn spectrum(&self, cut: usize) -> Result<SchmidtSpectrum> {
        if cut == 0 || cut > self.n_bonds() {
            return Err(invalid(format!("bond {cut} out of range 1..={}", self.n_bonds())));
        }
        let phys = self.physical_dims();
        let d_left = phys[..cut].iter().product();
        let d_right = phys[cut..].iter().product();
        Ok(SchmidtSpectrum { cut, d_left, d_right, sigmas: self.bond_spectra[cut - 1].clone() })
    }

    pub fn spectra(&self) -> Vec<SchmidtSpectrum> {
        (1..=self.n_bonds()).map(|k| self.spectrum(k).expect("bond in range")).collect()
    }

    /// Structural invariants: matching bonds, unit boundary bonds, and bond
    /// dimensions within `min(chi_max, d_left, d_right)`.
    pub fn validate(&self) -> Result<()> {
        let n = self.cores.len();
        if n == 0 {
            return Err(invalid("empty chain"));
        }
        for core in &self.cores {
            if core.order() != 3 {
                return Err(invalid(format!("core of order {} in chain", core.order())));
            }
        }
        if self.cores[0].dims()[0] != 1 || self.cores[n - 1].dims()[2] != 1 {
            return Err(invalid("boundary bond dimensions must be 1"));
        }
        for k in 0..n - 1 {
            if self.cores[k].dims()[2] != self.cores[k + 1].dims()[0] {
                return Err(invalid(format!("bond {} dimensions disagree", k + 1)));
            }
        }
        let phys = self.physical_dims();
        for (k, chi) in self.bond_dims().into_iter().enumerate() {
            let left: usize = phys[..=k].iter().product();
            let right: usize = phys[k + 1..].iter().product();
            let cap = self.chi_max.unwrap_or(usize::MAX).min(left).min(right);
            if chi > cap {
                return Err(invalid(format!("bond {} has dimension {chi} > {cap}", k + 1)));
            }
        }
        Ok(())
    }
}

/// Sweep `tensor` into an MPS, keeping at most `chi_max` singular values per
/// bond (the largest ones) when a cap is given.
pub fn decompose(tensor: &DenseTensor, chi_max: Option<usize>) -> Result<MpsChain> {
    if chi_max == Some(0) {
        return Err(invalid("chi_max must be positive"));
    }
    if tensor.is_all_zero() {
        return Err(degenerate("all-zero tensor has no Schmidt spectrum"));
    }
    let site_dims = tensor.dims().to_vec();
    let sites = if site_dims.is_empty() { vec![1] } else { site_dims.clone() };
    let n = sites.len();

    let mut cores = Vec::with_capacity(n);
    let mut bond_spectra = Vec::with_capacity(n - 1);
    let mut carry = tensor.data().to_vec();
    let mut left = 1usize;
    let mut remaining = tensor.len();

    for &d in &sites[..n - 1] {
        let rows = left * d;
        let cols = remaining / d;
        let svd = thin_svd(rows, cols, &carry)?;
        let full = svd.rank();
        let s_max = svd.s[0];
        let mut keep = svd.s.iter().take_while(|&&s| s > ZERO_CUTOFF * s_max).count().max(1);
        if let Some(cap) = chi_max {
            keep = keep.min(cap);
        }

        let mut core = Vec::with_capacity(rows * keep);
        for row in svd.u.chunks_exact(full) {
            core.extend_from_slice(&row[..keep]);
        }
        cores.push(DenseTensor::new(vec![left, d, keep], core)?);

        let mut next = Vec::with_capacity(keep * cols);
        for (a, row) in svd.vt.chunks_exact(cols).take(keep).enumerate() {
            next.extend(row.iter().map(|v| v * svd.s[a]));
        }
        bond_spectra.push(svd.s[..keep].to_vec());

        carry = next;
        left = keep;
        remaining = cols;
    }
    cores.push(DenseTensor::new(vec![left, sites[n - 1], 1], carry)?);

    Ok(MpsChain { cores, bond_spectra, chi_max, site_dims })
}

/// Contract all cores back into a dense tensor.
pub fn reconstruct(mps: &MpsChain) -> Result<DenseTensor> {
    let mut acc = vec![1.0];
    let mut acc_rows = 1usize;
    for core in &mps.cores {
        let (l, d, r) = (core.dims()[0], core.dims()[1], core.dims()[2]);
        acc = matmul_raw(&acc, acc_rows, l, core.data(), d * r);
        acc_rows *= d;
    }
    DenseTensor::new(mps.site_dims.clone(), acc)
}

/// Singular values of the unfolding with rows = sites `1..=cut`, columns =
/// the rest. Independent of the sweep; used as its oracle.
pub fn cut_spectrum(tensor: &DenseTensor, cut: usize) -> Result<SchmidtSpectrum> {
    let dims = tensor.dims();
    if cut == 0 || cut >= dims.len() {
        return Err(invalid(format!(
            "cut {cut} out of range 1..={} for {} sites",
            dims.len().saturating_sub(1),
            dims.len()
        )));
    }
    let d_left: usize = dims[..cut].iter().product();
    let d_right: usize = dims[cut..].iter().product();
    let sigmas = singular_values(d_left, d_right, tensor.data())?;
    Ok(SchmidtSpectrum { cut, d_left, d_right, sigmas })
}

/// Direct-unfolding spectra at every internal cut, computed in parallel.
pub fn all_cut_spectra(tensor: &DenseTensor) -> Result<Vec<SchmidtSpectrum>> {
    let n = tensor.order();
    (1..n).into_par_iter().map(|k| cut_spectrum(tensor, k)).collect()
}
