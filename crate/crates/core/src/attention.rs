// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic single-head softmax attention at isotropic initialization.
//!
//! A scene draws a context `X0` with orthonormal rows, Gaussian projections
//! `W_Q, W_K, W_V`, and forms `A = softmax(QKᵀ/√d_qk)` and `X = A·V`.

use serde::{Deserialize, Serialize};

use crate::entropy::{profile, EntanglementProfile, LogBase};
use crate::error::{invalid, shape, Result};
use crate::linalg::{gram_rows, matmul, orthonormalize_rows};
use crate::rmt::{check_row_stochastic, sample_gaussian_matrix};
use crate::seed;
use crate::tensor::DenseTensor;

/// `T × d` matrix with orthonormal rows, from a QR of a Gaussian draw.
pub fn orthonormal_context(t: usize, d: usize, seed: u64) -> Result<DenseTensor> {
    if t == 0 || t > d {
        return Err(invalid(format!("context needs 0 < T <= d, got T={t}, d={d}")));
    }
    orthonormalize_rows(&sample_gaussian_matrix(t, d, seed)?)
}

/// How `Q, K, V` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Build `X0` and the weight matrices, then multiply.
    Explicit,
    /// Draw `Q, K, V` directly. `X0·W` with orthonormal `X0` and i.i.d.
    /// Gaussian `W` is itself i.i.d. Gaussian, so this has the same law
    /// without the `T × d` context.
    #[default]
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub t: usize,
    /// context dimension, `T ≤ d`
    pub d: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub seed: u64,
    pub causal: bool,
    /// RoPE angle base, `None` for no rotary embedding.
    pub rope_base: Option<f64>,
    /// Variance of the query/key weights; value weights use `1/d_v`.
    /// Zero gives all-zero logits and uniform attention.
    pub qk_weight_var: f64,
    pub mode: ProjectionMode,
}

impl SceneConfig {
    pub const DEFAULT_QK_WEIGHT_VAR: f64 = 0.5;

    pub fn new(t: usize, d: usize, d_qk: usize, seed: u64) -> Self {
        Self {
            t,
            d,
            d_qk,
            d_v: d_qk,
            seed,
            causal: false,
            rope_base: None,
            qk_weight_var: Self::DEFAULT_QK_WEIGHT_VAR,
            mode: ProjectionMode::Direct,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t > self.d {
            return Err(invalid(format!("scene needs 0 < T <= d, got T={}, d={}", self.t, self.d)));
        }
        if self.d_qk == 0 || self.d_v == 0 {
            return Err(invalid("head dimensions must be positive"));
        }
        if !(self.qk_weight_var >= 0.0 && self.qk_weight_var.is_finite()) {
            return Err(invalid(format!("qk weight variance must be non-negative, got {}", self.qk_weight_var)));
        }
        if self.rope_base.is_some() && !self.d_qk.is_multiple_of(2) {
            return Err(invalid(format!("rotary embedding needs even d_qk, got {}", self.d_qk)));
        }
        Ok(())
    }
}

/// Context and weights, kept only for explicit scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWeights {
    pub x0: DenseTensor,
    pub w_q: DenseTensor,
    pub w_k: DenseTensor,
    pub w_v: DenseTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScene {
    pub config: SceneConfig,
    pub context: Option<ContextWeights>,
    /// queries and keys after the rotary embedding, if any
    pub q: DenseTensor,
    pub k: DenseTensor,
    pub v: DenseTensor,
    pub a: DenseTensor,
    pub x: DenseTensor,
}

fn gaussian(rows: usize, cols: usize, var: f64, seed: u64) -> Result<DenseTensor> {
    Ok(sample_gaussian_matrix(rows, cols, seed)?.scale(var.sqrt()))
}

impl AttentionScene {
    pub fn build(config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let sub = |k: u64| seed::derive(c.seed, &[k]);
        let v_var = 1.0 / c.d_v as f64;
        let (context, q, k, v) = match c.mode {
            ProjectionMode::Explicit => {
                let x0 = orthonormal_context(c.t, c.d, sub(0))?;
                let w_q = gaussian(c.d, c.d_qk, c.qk_weight_var, sub(1))?;
                let w_k = gaussian(c.d, c.d_qk, c.qk_weight_var, sub(2))?;
                let w_v = gaussian(c.d, c.d_v, v_var, sub(3))?;
                let q = matmul(&x0, &w_q)?;
                let k = matmul(&x0, &w_k)?;
                let v = matmul(&x0, &w_v)?;
                (Some(ContextWeights { x0, w_q, w_k, w_v }), q, k, v)
            }
            ProjectionMode::Direct => (
                None,
                gaussian(c.t, c.d_qk, c.qk_weight_var, sub(1))?,
                gaussian(c.t, c.d_qk, c.qk_weight_var, sub(2))?,
                gaussian(c.t, c.d_v, v_var, sub(3))?,
            ),
        };
        let (q, k) = match c.rope_base {
            Some(base) => (apply_rope(&q, base)?, apply_rope(&k, base)?),
            None => (q, k),
        };
        let a = attention_matrix(&q, &k, c.d_qk, c.causal)?;
        let x = matmul(&a, &v)?;
        Ok(Self { config: c.clone(), context, q, k, v, a, x })
    }
}

/// Scaled scores `QKᵀ/√d_qk`.
pub fn attention_logits(q: &DenseTensor, k: &DenseTensor, d_qk: usize) -> Result<DenseTensor> {
    let (tq, dq) = q.shape2()?;
    let (tk, dk) = k.shape2()?;
    if dq != d_qk || dk != d_qk || tq != tk {
        return Err(shape(format!("Q is {tq}x{dq}, K is {tk}x{dk}, d_qk = {d_qk}")));
    }
    let kt = crate::linalg::transpose(k)?;
    Ok(matmul(q, &kt)?.scale(1.0 / (d_qk as f64).sqrt()))
}

/// Row-wise softmax; with `causal`, entries `j > i` get logit −∞ and come
/// out exactly zero.
pub fn softmax_rows(logits: &DenseTensor, causal: bool) -> Result<DenseTensor> {
    let (t, cols) = logits.shape2()?;
    let mut out = vec![0.0; t * cols];
    for (i, (row, dst)) in logits.data().chunks_exact(cols).zip(out.chunks_exact_mut(cols)).enumerate() {
        let live = if causal { (i + 1).min(cols) } else { cols };
        let max = row[..live].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &l) in dst[..live].iter_mut().zip(&row[..live]) {
            *o = (l - max).exp();
            total += *o;
        }
        dst[..live].iter_mut().for_each(|o| *o /= total);
    }
    DenseTensor::matrix(t, cols, out)
}

pub fn attention_matrix(q: &DenseTensor, k: &DenseTensor, d_qk: usize, causal: bool) -> Result<DenseTensor> {
    softmax_rows(&attention_logits(q, k, d_qk)?, causal)
}

/// Rotary position embedding with split-half pairing: coordinate `p` is
/// rotated together with `p + d/2` by angle `i · base^(−2p/d)` at row `i`.
pub fn apply_rope(m: &DenseTensor, base: f64) -> Result<DenseTensor> {
    let (t, d) = m.shape2()?;
    if d % 2 != 0 {
        return Err(invalid(format!("rotary embedding needs an even width, got {d}")));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(invalid(format!("rotary base must be positive, got {base}")));
    }
    let half = d / 2;
    let freqs: Vec<f64> = (0..half).map(|p| base.powf(-2.0 * p as f64 / d as f64)).collect();
    let mut out = m.data().to_vec();
    for (i, row) in out.chunks_exact_mut(d).enumerate().take(t) {
        for (p, f) in freqs.iter().enumerate() {
            let (sin, cos) = (i as f64 * f).sin_cos();
            let (x, y) = (row[p], row[p + half]);
            row[p] = x * cos - y * sin;
            row[p + half] = x * sin + y * cos;
        }
    }
    DenseTensor::matrix(t, d, out)
}

/// `A = (1/T)𝟙𝟙ᵀ + A⊥` for a row-stochastic `A`.
pub fn outlier_bulk_split(a: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    check_row_stochastic(a, 1e-6)?;
    let (rows, cols) = a.shape2()?;
    let mean = 1.0 / cols as f64;
    let mean_field = DenseTensor::matrix(rows, cols, vec![mean; rows * cols])?;
    let perp = DenseTensor::matrix(rows, cols, a.data().iter().map(|x| x - mean).collect())?;
    Ok((mean_field, perp))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskAblation {
    pub masked: DenseTensor,
    pub unmasked: DenseTensor,
    pub masked_profile: EntanglementProfile,
    pub unmasked_profile: EntanglementProfile,
}

/// Same logits, softmax with and without the causal mask.
pub fn mask_ablation(scene: &AttentionScene, base: LogBase) -> Result<MaskAblation> {
    let logits = attention_logits(&scene.q, &scene.k, scene.config.d_qk)?;
    let masked = softmax_rows(&logits, true)?;
    let unmasked = softmax_rows(&logits, false)?;
    Ok(MaskAblation {
        masked_profile: profile(&masked, None, base)?,
        unmasked_profile: profile(&unmasked, None, base)?,
        masked,
        unmasked,
    })
}

/// `Σ = X·Xᵀ`.
pub fn output_operator(x: &DenseTensor) -> Result<DenseTensor> {
    gram_rows(x)
}
