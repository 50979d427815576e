// SPDX-License-Identifier: MIT OR Apache-2.0

//! Random-matrix reference laws and the spectral checks built on them:
//! Marchenko–Pastur and quartercircle densities, stable rank and the
//! stable-rank entropy bounds, the logarithmic attention-entropy fit, and the
//! output-collapse scaling check.
//!
//! Everything here works in nats unless a [`LogBase`] is passed explicitly.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{binary_entropy, renyi_of_probabilities, shannon, LogBase};
use crate::error::{degenerate, invalid, shape, Result};
use crate::linalg::{matrix_singular_values, singular_values};
use crate::mps::SchmidtSpectrum;
use crate::seed;
use crate::tensor::DenseTensor;

/// I.i.d. standard normal `rows × cols` matrix, deterministic in `seed`.
pub fn sample_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Result<DenseTensor> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("gaussian matrix needs positive dims, got {rows}x{cols}")));
    }
    let mut rng = seed::rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    DenseTensor::matrix(rows, cols, data)
}

// Gauss–Legendre rule on [-1, 1]; nodes from Newton iteration on P_n.
const GL_ORDER: usize = 48;
const GL_PANELS: usize = 8;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Composite Gauss–Legendre integral of a smooth integrand.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let h = (b - a) / GL_PANELS as f64;
    (0..GL_PANELS)
        .map(|p| {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            nodes.iter().zip(weights).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// One-parameter reference laws for singular-value / eigenvalue histograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralLaw {
    /// Eigenvalue law of `GGᵀ/d_max` for a `d_min × d_max` Gaussian `G`,
    /// aspect ratio `c = d_min/d_max`, unit mean.
    MarchenkoPastur { c: f64 },
    /// Density `∝ sqrt(R² − x²)` on `[0, R]` with `R = 2σ`, so `m₂ = σ²`.
    QuarterCircle { sigma: f64 },
}

impl SpectralLaw {
    pub fn marchenko_pastur(c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(invalid(format!("MP aspect ratio must be in (0, 1], got {c}")));
        }
        Ok(SpectralLaw::MarchenkoPastur { c })
    }

    pub fn quartercircle(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("quartercircle sigma must be positive, got {sigma}")));
        }
        Ok(SpectralLaw::QuarterCircle { sigma })
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            SpectralLaw::MarchenkoPastur { c } => {
                let r = c.sqrt();
                ((1.0 - r).powi(2), (1.0 + r).powi(2))
            }
            SpectralLaw::QuarterCircle { sigma } => (0.0, 2.0 * sigma),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            // the MP c = 1 law has an integrable pole at 0; report 0 there
            return match *self {
                SpectralLaw::QuarterCircle { .. } if x == 0.0 => self.density(f64::MIN_POSITIVE),
                _ => 0.0,
            };
        }
        match *self {
            SpectralLaw::MarchenkoPastur { c } => ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * c * x),
            SpectralLaw::QuarterCircle { .. } => 4.0 * (hi * hi - x * x).sqrt() / (PI * hi * hi),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            SpectralLaw::MarchenkoPastur { c } => {
                // x = m − h·cos θ removes both square-root edges
                let m = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                let theta = ((m - x) / h).clamp(-1.0, 1.0).acos();
                // sin²θ = u(2 − u) and m − h·cosθ = lo + h·u with u = 1 − cosθ;
                // at lo = 0 the factor u cancels exactly
                let g = |t: f64| {
                    let u = 2.0 * (0.5 * t).sin().powi(2);
                    if lo > 0.0 {
                        h * h * u * (2.0 - u) / (2.0 * PI * c * (lo + h * u))
                    } else {
                        h * (2.0 - u) / (2.0 * PI * c)
                    }
                };
                integrate(g, 0.0, theta).clamp(0.0, 1.0)
            }
            SpectralLaw::QuarterCircle { .. } => {
                let u = x / hi;
                (2.0 / PI) * (u * (1.0 - u * u).sqrt() + u.asin())
            }
        }
    }
}

pub fn mp_support(c: f64) -> Result<(f64, f64)> {
    Ok(SpectralLaw::marchenko_pastur(c)?.support())
}

pub fn mp_density(x: f64, c: f64) -> Result<f64> {
    Ok(SpectralLaw::marchenko_pastur(c)?.density(x))
}

pub fn quartercircle_density(x: f64, sigma: f64) -> Result<f64> {
    let law = SpectralLaw::quartercircle(sigma)?;
    Ok(if x < 0.0 { 0.0 } else { law.density(x) })
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `law`.
pub fn ks_distance(samples: &[f64], law: &SpectralLaw) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS distance needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .reduce(|| 0.0, f64::max);
    Ok(d.min(1.0))
}

/// Eigenvalues of the cut's reduced density matrix rescaled by the smaller
/// subsystem dimension, `x_i = d_min · p_i`, plus the aspect ratio `c`.
pub fn rescaled_rdm_eigenvalues(spec: &SchmidtSpectrum) -> Result<(Vec<f64>, f64)> {
    let d_min = spec.d_left.min(spec.d_right);
    let d_max = spec.d_left.max(spec.d_right);
    let total: f64 = spec.sigmas.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(degenerate("all-zero spectrum"));
    }
    let mut x: Vec<f64> = spec.sigmas.iter().map(|s| d_min as f64 * s * s / total).collect();
    x.resize(d_min, 0.0);
    Ok((x, d_min as f64 / d_max as f64))
}

fn sorted_eigenvalues(eigs: &[f64]) -> Result<Vec<f64>> {
    if eigs.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid("eigenvalues must be finite and non-negative"));
    }
    let mut v = eigs.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    if v.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(degenerate("all-zero spectrum"));
    }
    Ok(v)
}

/// `Tr(Σ²)/λ₁² = 1 + Σ_{i≥2} (λ_i/λ₁)²`.
pub fn stable_rank(eigenvalues: &[f64]) -> Result<f64> {
    let v = sorted_eigenvalues(eigenvalues)?;
    Ok(1.0 + v[1..].iter().map(|x| (x / v[0]).powi(2)).sum::<f64>())
}

/// `(S, S₂)` in nats of `ρ = Σ / Tr Σ`.
pub fn density_matrix_entropies(eigenvalues: &[f64]) -> Result<(f64, f64)> {
    let v = sorted_eigenvalues(eigenvalues)?;
    let total: f64 = v.iter().sum();
    let p: Vec<f64> = v.iter().map(|x| x / total).collect();
    Ok((shannon(&p, LogBase::E)?, renyi_of_probabilities(&p, 2.0, LogBase::E)?))
}

/// Entropy bounds implied by the stable rank of a PSD spectrum (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBounds {
    pub t: usize,
    /// `r_stable − 1`
    pub eta: f64,
    /// `Σ_{i≥2} λ_i/λ₁`
    pub delta1: f64,
    /// `min(1, δ₁)`
    pub delta: f64,
    /// `sqrt((T−1)·η)`, which always dominates `δ₁`.
    pub delta1_certificate: f64,
    /// Exact tail mass `1 − p₁ = δ₁/(1+δ₁)`.
    pub tail_mass: f64,
    /// Closed form `h₂(δ) + δ·log(T−1)`. Not an upper bound once
    /// `δ > (T−1)/T`: a flat spectrum has entropy `log T` but gets `log(T−1)`.
    pub vn_bound_closed_form: f64,
    /// `h₂(δ') + δ'·log(T−1)` with `δ' = min(δ, (T−1)/T)`. The tail mass never
    /// exceeds `(T−1)/T` and the expression increases up to there, so this
    /// is a valid bound; it equals the closed form when `δ ≤ (T−1)/T` and
    /// `log T` at the cap.
    pub vn_bound: f64,
    /// `2·log(1+δ₁)`
    pub renyi2_bound: f64,
}

pub fn entropy_bounds(eigenvalues: &[f64]) -> Result<EntropyBounds> {
    let v = sorted_eigenvalues(eigenvalues)?;
    let t = v.len();
    let ratios = v[1..].iter().map(|x| x / v[0]);
    let (eta, delta1) = ratios.fold((0.0, 0.0), |(e, d), r| (e + r * r, d + r));
    let delta = delta1.min(1.0);
    let tail_form = |u: f64| -> Result<f64> {
        let spread = if t > 1 && u > 0.0 { u * ((t - 1) as f64).ln() } else { 0.0 };
        Ok(binary_entropy(u, LogBase::E)? + spread)
    };
    let cap = (t - 1) as f64 / t as f64;
    Ok(EntropyBounds {
        t,
        eta,
        delta1,
        delta,
        delta1_certificate: ((t - 1) as f64 * eta).sqrt(),
        tail_mass: delta1 / (1.0 + delta1),
        vn_bound_closed_form: tail_form(delta)?,
        vn_bound: tail_form(delta.min(cap))?,
        renyi2_bound: 2.0 * delta1.ln_1p(),
    })
}

/// Raise an error unless every row of `a` sums to one within `tol`.
pub fn check_row_stochastic(a: &DenseTensor, tol: f64) -> Result<()> {
    let (rows, cols) = a.shape2()?;
    for (i, row) in a.data().chunks_exact(cols).enumerate().take(rows) {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol || row.iter().any(|&x| !x.is_finite()) {
            return Err(invalid(format!("row {i} sums to {s}, matrix is not row-stochastic")));
        }
    }
    Ok(())
}

/// `‖A − (1/T)𝟙𝟙ᵀ‖²_F` for a row-stochastic `A`.
pub fn estimate_sigma2(a: &DenseTensor) -> Result<f64> {
    check_row_stochastic(a, 1e-6)?;
    let (_, cols) = a.shape2()?;
    let mean = 1.0 / cols as f64;
    Ok(a.data().iter().map(|x| (x - mean).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m2: f64,
    pub m4: f64,
    pub m2log: f64,
}

/// Normalized moments `(1/T)Σx²`, `(1/T)Σx⁴`, `(1/T)Σx² ln x²` of rescaled
/// singular values; zero values are skipped in the log moment.
pub fn empirical_moments(x: &[f64]) -> Moments {
    let n = x.len().max(1) as f64;
    let mut m = Moments { m2: 0.0, m4: 0.0, m2log: 0.0 };
    for &v in x {
        let sq = v * v;
        m.m2 += sq;
        m.m4 += sq * sq;
        if sq > 0.0 {
            m.m2log += sq * sq.ln();
        }
    }
    m.m2 /= n;
    m.m4 /= n;
    m.m2log /= n;
    m
}

/// Entropy statistics of one attention matrix, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpectrumStats {
    pub t: usize,
    pub entropy: f64,
    pub renyi2: f64,
    pub s1: f64,
    pub p1: f64,
    pub sigma2: f64,
}

pub fn attention_spectrum_stats(a: &DenseTensor) -> Result<AttentionSpectrumStats> {
    let (t, cols) = a.shape2()?;
    if t != cols {
        return Err(shape(format!("attention matrix must be square, got {t}x{cols}")));
    }
    let sigma2 = estimate_sigma2(a)?;
    let s = matrix_singular_values(a)?;
    let total: f64 = s.iter().map(|x| x * x).sum();
    let p: Vec<f64> = s.iter().map(|x| x * x / total).collect();
    Ok(AttentionSpectrumStats {
        t,
        entropy: shannon(&p, LogBase::E)?,
        renyi2: renyi_of_probabilities(&p, 2.0, LogBase::E)?,
        s1: s[0],
        p1: p[0],
        sigma2,
    })
}

/// Rescaled singular values `√T · s_i(A⊥)`.
pub fn rescaled_bulk_singular_values(a: &DenseTensor) -> Result<Vec<f64>> {
    let (t, cols) = a.shape2()?;
    let mean = 1.0 / cols as f64;
    let perp: Vec<f64> = a.data().iter().map(|x| x - mean).collect();
    let scale = (t as f64).sqrt();
    Ok(singular_values(t, cols, &perp)?.into_iter().map(|s| s * scale).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardyPoint {
    pub t: usize,
    pub samples: usize,
    /// Mean von Neumann entropy (nats) over the samples at this length.
    pub entropy: f64,
    pub renyi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardyFit {
    pub points: Vec<CardyPoint>,
    /// Least-squares slope of `S` (nats) against `ln T`.
    pub slope: f64,
    pub intercept: f64,
    /// `‖A⊥‖²_F`, averaged over samples at the largest `T`.
    pub sigma2_estimate: f64,
    /// `σ̂²/(1+σ̂²)`
    pub predicted_charge: f64,
    /// `|slope − charge| / charge`; `None` when the charge is zero.
    pub relative_deviation: Option<f64>,
    /// Mean Rényi-2 entropy at the largest `T` and its limit `2 ln(1+σ̂²)`.
    pub renyi2_at_max_t: f64,
    pub renyi2_predicted: f64,
    pub s1_at_max_t: f64,
    pub p1_at_max_t: f64,
    /// `1/(1+σ̂²)`
    pub p1_predicted: f64,
    /// Bulk moments of `√T·s_i(A⊥)` at the largest `T`.
    pub moments_at_max_t: Moments,
    /// `ln(1+σ²) + σ²/(1+σ²)·ln(1+σ²) − m_{2log}/(1+σ²)`; report-only.
    pub constant_c_a: f64,
    /// Conversion factor from the nats used here to bits.
    pub bits_per_nat: f64,
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Per-matrix input to [`fit_cardy`]; bulk moments are needed only for the
/// largest length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardySample {
    pub stats: AttentionSpectrumStats,
    pub bulk: Option<Moments>,
}

pub fn cardy_sample(a: &DenseTensor, with_bulk: bool) -> Result<CardySample> {
    let stats = attention_spectrum_stats(a)?;
    let bulk = if with_bulk { Some(empirical_moments(&rescaled_bulk_singular_values(a)?)) } else { None };
    Ok(CardySample { stats, bulk })
}

/// Fit `S(A) = C·ln T + const` over attention matrices at several lengths
/// and compare the slope with the charge predicted from the bulk width.
pub fn cardy_fit(samples: &[(usize, DenseTensor)]) -> Result<CardyFit> {
    for (t, a) in samples {
        let (r, c) = a.shape2()?;
        if r != *t || c != *t {
            return Err(shape(format!("sample labelled T={t} has shape {r}x{c}")));
        }
        check_row_stochastic(a, 1e-6)?;
    }
    let t_max = samples.iter().map(|(t, _)| *t).max().unwrap_or(0);
    let reduced: Vec<CardySample> =
        samples.par_iter().map(|(t, a)| cardy_sample(a, *t == t_max)).collect::<Result<_>>()?;
    fit_cardy(&reduced)
}

pub fn fit_cardy(samples: &[CardySample]) -> Result<CardyFit> {
    let mut lengths: Vec<usize> = samples.iter().map(|s| s.stats.t).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 4 {
        return Err(invalid(format!("cardy fit needs at least 4 distinct lengths, got {}", lengths.len())));
    }
    let points: Vec<CardyPoint> = lengths
        .iter()
        .map(|&t| {
            let group: Vec<&AttentionSpectrumStats> = samples.iter().map(|s| &s.stats).filter(|s| s.t == t).collect();
            let n = group.len() as f64;
            CardyPoint {
                t,
                samples: group.len(),
                entropy: group.iter().map(|s| s.entropy).sum::<f64>() / n,
                renyi2: group.iter().map(|s| s.renyi2).sum::<f64>() / n,
            }
        })
        .collect();
    let xy: Vec<(f64, f64)> = points.iter().map(|p| ((p.t as f64).ln(), p.entropy)).collect();
    let (slope, intercept) = least_squares(&xy);

    let t_max = *lengths.last().expect("non-empty");
    let top: Vec<&CardySample> = samples.iter().filter(|s| s.stats.t == t_max).collect();
    let n_top = top.len() as f64;
    let mean = |f: fn(&AttentionSpectrumStats) -> f64| top.iter().map(|s| f(&s.stats)).sum::<f64>() / n_top;
    let sigma2 = mean(|s| s.sigma2);
    let charge = sigma2 / (1.0 + sigma2);

    let bulk: Vec<Moments> = top
        .iter()
        .map(|s| s.bulk.ok_or_else(|| invalid(format!("missing bulk moments at T={t_max}"))))
        .collect::<Result<_>>()?;
    let nb = bulk.len() as f64;
    let moments = Moments {
        m2: bulk.iter().map(|m| m.m2).sum::<f64>() / nb,
        m4: bulk.iter().map(|m| m.m4).sum::<f64>() / nb,
        m2log: bulk.iter().map(|m| m.m2log).sum::<f64>() / nb,
    };
    let log1p = sigma2.ln_1p();

    Ok(CardyFit {
        slope,
        intercept,
        sigma2_estimate: sigma2,
        predicted_charge: charge,
        relative_deviation: (charge > 0.0).then(|| (slope - charge).abs() / charge),
        renyi2_at_max_t: points.last().expect("non-empty").renyi2,
        renyi2_predicted: 2.0 * log1p,
        s1_at_max_t: mean(|s| s.s1),
        p1_at_max_t: mean(|s| s.p1),
        p1_predicted: 1.0 / (1.0 + sigma2),
        moments_at_max_t: moments,
        constant_c_a: log1p + charge * log1p - moments.m2log / (1.0 + sigma2),
        bits_per_nat: 1.0 / std::f64::consts::LN_2,
        points,
    })
}

/// Spectrum `[1, T⁻², …, T⁻²]` of length `T`, giving `η = (T−1)/T⁴ ≈ T⁻³`.
pub fn collapse_spectrum(t: usize) -> Vec<f64> {
    let tail = 1.0 / (t as f64 * t as f64);
    std::iter::once(1.0).chain(std::iter::repeat_n(tail, t.saturating_sub(1))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub t: usize,
    pub eta: f64,
    pub delta1: f64,
    pub delta: f64,
    pub entropy: f64,
    pub renyi2: f64,
    pub vn_bound: f64,
    pub renyi2_bound: f64,
    /// `S·T/ln T`
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub rows: Vec<CollapseRow>,
    /// max/min of `S·T/ln T` across the grid; `None` if some entropy is zero.
    pub scaled_ratio: Option<f64>,
    pub monotone_decreasing: bool,
    pub bounds_hold: bool,
}

/// Evaluate entropies and stable-rank bounds of `XXᵀ` spectra across a grid
/// of sequence lengths.
pub fn output_collapse_check(spectra: &[(usize, Vec<f64>)]) -> Result<CollapseReport> {
    let mut rows = spectra
        .iter()
        .map(|(t, eigs)| {
            if eigs.len() != *t {
                return Err(shape(format!("spectrum for T={t} has {} entries", eigs.len())));
            }
            let b = entropy_bounds(eigs)?;
            let (entropy, renyi2) = density_matrix_entropies(eigs)?;
            let lt = (*t as f64).ln();
            Ok(CollapseRow {
                t: *t,
                eta: b.eta,
                delta1: b.delta1,
                delta: b.delta,
                entropy,
                renyi2,
                vn_bound: b.vn_bound,
                renyi2_bound: b.renyi2_bound,
                scaled: if lt > 0.0 { entropy * *t as f64 / lt } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.t);
    let scaled_ratio = if rows.iter().all(|r| r.scaled > 0.0) {
        let max = rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
        let min = rows.iter().map(|r| r.scaled).fold(f64::INFINITY, f64::min);
        Some(max / min)
    } else {
        None
    };
    let monotone_decreasing = rows.windows(2).all(|w| w[1].entropy <= w[0].entropy);
    let bounds_hold = rows.iter().all(|r| r.entropy <= r.vn_bound + 1e-12 && r.renyi2 <= r.renyi2_bound + 1e-12);
    Ok(CollapseReport { rows, scaled_ratio, monotone_decreasing, bounds_hold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_sampling_is_deterministic() {
        let a = sample_gaussian_matrix(2, 2, 7).unwrap();
        let b = sample_gaussian_matrix(2, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_gaussian_matrix(2, 2, 8).unwrap());
        assert!(sample_gaussian_matrix(0, 3, 1).is_err());
    }

    #[test]
    fn gaussian_sample_mean_is_small() {
        let m = sample_gaussian_matrix(1000, 1000, 1).unwrap();
        let mean = m.data().iter().sum::<f64>() / m.len() as f64;
        // 3/sqrt(N) with N = 1e6
        assert!(mean.abs() <= 0.003, "mean {mean}");
    }

    #[test]
    fn mp_supports() {
        assert_eq!(mp_support(1.0).unwrap(), (0.0, 4.0));
        let (lo, hi) = mp_support(0.25).unwrap();
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 2.25).abs() < 1e-15);
        assert!(mp_support(0.0).is_err());
        assert!(mp_support(1.5).is_err());
        assert!(mp_density(5.0, 1.0).unwrap() == 0.0);
    }

    // Independent check: midpoint rule in x after x = lo + (hi-lo)·u², which
    // tames the square-root / pole behaviour at the left edge.
    fn midpoint_mass(law: &SpectralLaw, n: usize) -> (f64, f64) {
        let (lo, hi) = law.support();
        let (mut mass, mut m2) = (0.0, 0.0);
        for k in 0..n {
            let u = (k as f64 + 0.5) / n as f64;
            let x = lo + (hi - lo) * u * u;
            let w = law.density(x) * 2.0 * (hi - lo) * u / n as f64;
            mass += w;
            m2 += w * x * x;
        }
        (mass, m2)
    }

    #[test]
    fn densities_integrate_to_one() {
        for c in [1.0, 0.5, 0.25, 0.01] {
            let law = SpectralLaw::marchenko_pastur(c).unwrap();
            assert!((law.cdf(law.support().1 - 1e-12) - 1.0).abs() < 1e-6, "c={c}");
            let (mass, _) = midpoint_mass(&law, 400_000);
            assert!((mass - 1.0).abs() < 1e-6, "c={c} mass {mass}");
        }
        for sigma in [0.5, 1.0, 3.0] {
            let law = SpectralLaw::quartercircle(sigma).unwrap();
            let (mass, m2) = midpoint_mass(&law, 400_000);
            assert!((mass - 1.0).abs() < 1e-6);
            assert!((m2 - sigma * sigma).abs() < 1e-4 * sigma * sigma);
        }
        assert_eq!(quartercircle_density(2.5, 1.0).unwrap(), 0.0);
        assert!(quartercircle_density(0.5, 0.0).is_err());
    }

    #[test]
    fn mp_cdf_near_the_hard_edge() {
        let law = SpectralLaw::marchenko_pastur(1.0).unwrap();
        for x in [1e-300, 1e-30, 1e-12, 1e-6] {
            let f = law.cdf(x);
            // F(x) ≈ (2/π)·√x as x → 0 at c = 1
            assert!(f.is_finite() && f <= 2.0 * x.sqrt() / PI * (1.0 + 1e-3) + 1e-15, "x={x} F={f}");
        }
        let (x, want) = (1.0, 1.0 / 3.0 + 3f64.sqrt() / (2.0 * PI));
        assert!((law.cdf(x) - want).abs() < 1e-12, "{}", law.cdf(x));
    }

    #[test]
    fn mp_cdf_matches_density() {
        let law = SpectralLaw::marchenko_pastur(0.3).unwrap();
        let (lo, hi) = law.support();
        for k in 1..10 {
            let x = lo + (hi - lo) * k as f64 / 10.0;
            let h = 1e-5;
            let deriv = (law.cdf(x + h) - law.cdf(x - h)) / (2.0 * h);
            assert!((deriv - law.density(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn ks_examples() {
        // quantile samples of the law itself
        let law = SpectralLaw::quartercircle(1.0).unwrap();
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let target = (i as f64 + 0.5) / n as f64;
                let (mut a, mut b) = (0.0, 2.0);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if law.cdf(m) < target {
                        a = m
                    } else {
                        b = m
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        assert!(ks_distance(&samples, &law).unwrap() <= 0.03);

        let mp = SpectralLaw::marchenko_pastur(1.0).unwrap();
        assert!(ks_distance(&[1.0; 100], &mp).unwrap() >= 0.5);
        assert!((ks_distance(&[10.0, 11.0], &mp).unwrap() - 1.0).abs() < 1e-12);
        assert!(ks_distance(&[], &mp).is_err());
    }

    #[test]
    fn stable_rank_examples() {
        assert!((stable_rank(&[1.0; 9]).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(stable_rank(&[3.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((stable_rank(&[2.0, 1.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!(stable_rank(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn bounds_rank_one() {
        let b = entropy_bounds(&[5.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((b.eta, b.delta1, b.vn_bound, b.renyi2_bound), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn bounds_on_uniform_spectra() {
        // flat spectra put δ₁ = T−1, δ = 1 and the closed form at log(T−1),
        // below the exact entropy log T; the capped bound lands on log T
        for t in 2..=64usize {
            let b = entropy_bounds(&vec![1.0; t]).unwrap();
            assert!((b.delta1 - (t - 1) as f64).abs() < 1e-12);
            assert_eq!(b.delta, 1.0);
            assert!((b.vn_bound_closed_form - ((t - 1) as f64).ln()).abs() < 1e-12);
            assert!((b.vn_bound - (t as f64).ln()).abs() < 1e-12);
            let (s, s2) = density_matrix_entropies(&vec![1.0; t]).unwrap();
            assert!((s - (t as f64).ln()).abs() < 1e-12);
            assert!(s <= b.vn_bound + 1e-12 && s > b.vn_bound_closed_form);
            assert!(s2 <= b.renyi2_bound + 1e-12);
            assert!(b.delta1 <= b.delta1_certificate + 1e-12);
        }
    }

    #[test]
    fn delta1_certificate_on_epsilon_grid() {
        for t in [2usize, 5, 17, 128] {
            for k in 0..50 {
                let eps = 10f64.powf(-6.0 + 6.0 * k as f64 / 49.0);
                let mut eig = vec![eps; t];
                eig[0] = 1.0;
                let b = entropy_bounds(&eig).unwrap();
                let eta = (t - 1) as f64 * eps * eps;
                assert!((b.eta - eta).abs() <= 1e-12 * eta.max(1.0));
                assert!(b.delta1 <= ((t - 1) as f64 * eta).sqrt() * (1.0 + 1e-12));
            }
        }
    }

    fn spectrum_strategy(t_max: usize) -> impl Strategy<Value = Vec<f64>> {
        (2usize..=t_max, 0.0f64..12.0, any::<u64>()).prop_map(|(t, spread, seed)| {
            use rand::Rng;
            let mut rng = seed::rng(seed);
            let mut v: Vec<f64> = (0..t).map(|_| (spread * (rng.random::<f64>() - 1.0)).exp()).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
    }

    proptest! {
        #[test]
        fn renyi2_and_certificate_always_hold(eigs in spectrum_strategy(256)) {
            let b = entropy_bounds(&eigs).unwrap();
            let (_, s2) = density_matrix_entropies(&eigs).unwrap();
            prop_assert!(s2 <= b.renyi2_bound + 1e-12);
            prop_assert!(b.delta1 <= b.delta1_certificate * (1.0 + 1e-12) + 1e-300);
            prop_assert!(b.tail_mass <= b.delta + 1e-15);
        }

        #[test]
        fn capped_vn_bound_always_holds(eigs in spectrum_strategy(256)) {
            let b = entropy_bounds(&eigs).unwrap();
            let (s, _) = density_matrix_entropies(&eigs).unwrap();
            prop_assert!(s <= b.vn_bound + 1e-12, "S={s} bound={}", b.vn_bound);
            prop_assert!(b.vn_bound <= (b.t as f64).ln() + 1e-12);
            if b.delta <= (b.t - 1) as f64 / b.t as f64 {
                prop_assert_eq!(b.vn_bound, b.vn_bound_closed_form);
            }
        }
    }

    #[test]
    fn closed_form_fails_for_two_near_flat_modes() {
        // tail mass 4/9 sits below δ = 0.8, where h₂ is larger
        let b = entropy_bounds(&[1.0, 0.8]).unwrap();
        let (s, _) = density_matrix_entropies(&[1.0, 0.8]).unwrap();
        assert!((b.vn_bound_closed_form - binary_entropy(0.8, LogBase::E).unwrap()).abs() < 1e-15);
        assert!(s > b.vn_bound_closed_form + 0.1);
        assert!((b.vn_bound - 2f64.ln()).abs() < 1e-15 && s <= b.vn_bound);
    }

    #[test]
    fn sigma2_examples() {
        let t = 8;
        let uniform = DenseTensor::matrix(t, t, vec![1.0 / t as f64; t * t]).unwrap();
        assert!(estimate_sigma2(&uniform).unwrap().abs() < 1e-15);
        let id = DenseTensor::identity(t).unwrap();
        assert!((estimate_sigma2(&id).unwrap() - (t as f64 - 1.0)).abs() < 1e-12);
        let bad = DenseTensor::matrix(2, 2, vec![1.0, 1.0, 0.5, 0.5]).unwrap();
        assert!(estimate_sigma2(&bad).is_err());
    }

    #[test]
    fn moments_of_ones() {
        let m = empirical_moments(&[1.0; 16]);
        assert_eq!((m.m2, m.m4, m.m2log), (1.0, 1.0, 0.0));
        let m = empirical_moments(&[0.0, 2.0]);
        assert!((m.m2 - 2.0).abs() < 1e-15 && (m.m2log - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn quartercircle_samples_recover_second_moment() {
        // inverse-CDF draws from Q_1 at T = 4096, checked against m2 = 1
        use rand::Rng;
        let law = SpectralLaw::quartercircle(1.0).unwrap();
        let mut rng = seed::rng(99);
        let x: Vec<f64> = (0..4096)
            .map(|_| {
                let target: f64 = rng.random();
                let (mut a, mut b) = (0.0, 2.0);
                for _ in 0..50 {
                    let m = 0.5 * (a + b);
                    if law.cdf(m) < target {
                        a = m
                    } else {
                        b = m
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        let m = empirical_moments(&x);
        assert!((m.m2 - 1.0).abs() <= 0.05, "m2 {}", m.m2);
        assert!(m.m4.is_finite());
    }

    #[test]
    fn cardy_fit_on_mean_field() {
        let samples: Vec<(usize, DenseTensor)> = [8usize, 16, 32, 64]
            .iter()
            .map(|&t| (t, DenseTensor::matrix(t, t, vec![1.0 / t as f64; t * t]).unwrap()))
            .collect();
        let fit = cardy_fit(&samples).unwrap();
        assert!(fit.slope.abs() < 1e-10);
        assert!(fit.sigma2_estimate.abs() < 1e-20);
        assert!(fit.points.iter().all(|p| p.entropy.abs() < 1e-10));
        assert_eq!(fit.relative_deviation, None);
    }

    #[test]
    fn cardy_fit_rejects_bad_input() {
        let few: Vec<(usize, DenseTensor)> =
            [8usize, 16, 32].iter().map(|&t| (t, DenseTensor::identity(t).unwrap())).collect();
        assert!(cardy_fit(&few).is_err());
        let mut bad: Vec<(usize, DenseTensor)> =
            [4usize, 8, 16, 32].iter().map(|&t| (t, DenseTensor::identity(t).unwrap())).collect();
        bad[0].1 = bad[0].1.scale(2.0);
        assert!(cardy_fit(&bad).is_err());
    }

    #[test]
    fn collapse_spectrum_shape() {
        let s = collapse_spectrum(64);
        assert_eq!(s.len(), 64);
        let b = entropy_bounds(&s).unwrap();
        assert!((b.eta - 63.0 / 64f64.powi(4)).abs() < 1e-18);
        let rank_one: Vec<(usize, Vec<f64>)> = [64usize, 128]
            .iter()
            .map(|&t| {
                let mut v = vec![0.0; t];
                v[0] = 1.0;
                (t, v)
            })
            .collect();
        let r = output_collapse_check(&rank_one).unwrap();
        assert!(r.rows.iter().all(|row| row.entropy == 0.0));
        assert!(r.bounds_hold && r.scaled_ratio.is_none());
    }
}
