// SPDX-License-Identifier: MIT OR Apache-2.0

//! Schmidt normalization, von Neumann / Rényi entropies, the Page reference
//! curve and per-cut entanglement profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};
use crate::mps::{decompose, MpsChain, ZERO_CUTOFF};
use crate::tensor::{tensorize, DenseTensor};

/// Logarithm base for reported entropies. Bits by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    /// Convert a value in nats to this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Two => nats / std::f64::consts::LN_2,
            LogBase::E => nats,
        }
    }

    pub fn log(self, x: f64) -> f64 {
        self.from_nats(x.ln())
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        })
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "bits" => Ok(LogBase::Two),
            "e" | "nats" => Ok(LogBase::E),
            other => Err(invalid(format!("unknown log base {other:?} (use 2 or e)"))),
        }
    }
}

/// Schmidt coefficients `λ_i = σ_i / sqrt(Σ σ²)`.
pub fn normalize_spectrum(sigmas: &[f64]) -> Result<Vec<f64>> {
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(invalid("singular values must be finite and non-negative"));
    }
    let norm = sigmas.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(degenerate("all-zero spectrum cannot be normalized"));
    }
    Ok(sigmas.iter().map(|s| s / norm).collect())
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid("probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// `-Σ p log p` with `0 log 0 = 0`.
pub fn shannon(p: &[f64], base: LogBase) -> Result<f64> {
    check_probabilities(p)?;
    let nats: f64 = -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    Ok(base.from_nats(nats.max(0.0)))
}

/// `(1/(1-α)) log Σ p^α` for `α > 0, α ≠ 1`.
pub fn renyi_of_probabilities(p: &[f64], alpha: f64, base: LogBase) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha == 1.0 {
        return Err(invalid(format!("Rényi order must be positive and != 1, got {alpha}")));
    }
    check_probabilities(p)?;
    let sum: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(alpha)).sum();
    Ok(base.from_nats((sum.ln() / (1.0 - alpha)).max(0.0)))
}

/// Von Neumann entropy of normalized Schmidt coefficients.
pub fn von_neumann(lambdas: &[f64], base: LogBase) -> Result<f64> {
    let p: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    shannon(&p, base)
}

pub fn renyi(lambdas: &[f64], alpha: f64, base: LogBase) -> Result<f64> {
    let p: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    renyi_of_probabilities(&p, alpha, base)
}

pub fn binary_entropy(u: f64, base: LogBase) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(invalid(format!("binary entropy argument {u} outside [0, 1]")));
    }
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    Ok(base.from_nats(term(u) + term(1.0 - u)))
}

/// Leading-order Page entropy in bits, `log₂ d_L − d_L / (2 d_R ln 2)`,
/// clamped at zero. Requires `d_L ≤ d_R`.
pub fn page_entropy(d_left: usize, d_right: usize) -> Result<f64> {
    if d_left == 0 || d_left > d_right {
        return Err(invalid(format!("page entropy needs 1 <= d_L <= d_R, got ({d_left}, {d_right})")));
    }
    let (l, r) = (d_left as f64, d_right as f64);
    Ok((l.log2() - l / (2.0 * r * std::f64::consts::LN_2)).max(0.0))
}

/// Entanglement weights `p_i = σ_i² / Σσ²` after dropping values at or below
/// `ZERO_CUTOFF · σ_max`.
pub fn spectrum_weights(sigmas: &[f64]) -> Result<Vec<f64>> {
    let s_max = sigmas.iter().copied().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Err(degenerate("all-zero spectrum"));
    }
    let kept: Vec<f64> = sigmas.iter().copied().filter(|&s| s > ZERO_CUTOFF * s_max).collect();
    let total: f64 = kept.iter().map(|s| s * s).sum();
    Ok(kept.iter().map(|s| s * s / total).collect())
}

/// `(S, S₂, nonzero count)` for raw singular values.
pub fn spectrum_entropies(sigmas: &[f64], base: LogBase) -> Result<(f64, f64, usize)> {
    let p = spectrum_weights(sigmas)?;
    let s = shannon(&p, base)?;
    let s2 = renyi_of_probabilities(&p, 2.0, base)?;
    Ok((s, s2, p.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutEntropy {
    pub cut: usize,
    pub d_left: usize,
    pub d_right: usize,
    /// Bond dimension retained at this cut.
    pub chi: usize,
    pub entropy: f64,
    pub renyi2: f64,
    /// `S / log(min(d_left, d_right))`, in `[0, 1]`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementProfile {
    pub base: LogBase,
    /// Bond index of the row–column bipartition when the source was a matrix.
    pub row_column_cut: Option<usize>,
    pub cuts: Vec<CutEntropy>,
}

impl EntanglementProfile {
    pub fn entropies(&self) -> Vec<f64> {
        self.cuts.iter().map(|c| c.entropy).collect()
    }

    pub fn at(&self, cut: usize) -> Option<&CutEntropy> {
        self.cuts.iter().find(|c| c.cut == cut)
    }

    pub fn max_entropy(&self) -> f64 {
        self.cuts.iter().map(|c| c.entropy).fold(0.0, f64::max)
    }

    pub fn max_normalized(&self) -> f64 {
        self.cuts.iter().map(|c| c.normalized).fold(0.0, f64::max)
    }
}

pub fn profile_from_chain(chain: &MpsChain, base: LogBase) -> Result<EntanglementProfile> {
    let cuts = chain
        .spectra()
        .into_iter()
        .map(|spec| {
            let (entropy, renyi2, _) = spectrum_entropies(&spec.sigmas, base)?;
            let cap = base.log(spec.d_left.min(spec.d_right) as f64);
            let normalized = if cap > 0.0 { (entropy / cap).min(1.0) } else { 0.0 };
            Ok(CutEntropy {
                cut: spec.cut,
                d_left: spec.d_left,
                d_right: spec.d_right,
                chi: spec.sigmas.len(),
                entropy,
                renyi2,
                normalized,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EntanglementProfile { base, row_column_cut: None, cuts })
}

/// Tensorize a matrix over its prime sites, sweep it into an MPS and report
/// the entropy at every internal cut.
pub fn profile(matrix: &DenseTensor, chi_max: Option<usize>, base: LogBase) -> Result<EntanglementProfile> {
    let (layout, tensor) = tensorize(matrix)?;
    let chain = decompose(&tensor, chi_max)?;
    let mut prof = profile_from_chain(&chain, base)?;
    let rc = layout.row_column_cut();
    if rc >= 1 && rc < layout.n_sites() {
        prof.row_column_cut = Some(rc);
    }
    Ok(prof)
}
