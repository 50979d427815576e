// SPDX-License-Identifier: MIT OR Apache-2.0

//! LoRA and two-core MPS adapter updates, parameter counts, and the
//! row–column bottleneck ("valley") check on low-rank updates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entropy::{profile, EntanglementProfile, LogBase};
use crate::error::{invalid, shape, Result};
use crate::linalg::matmul;
use crate::rmt::sample_gaussian_matrix;
use crate::seed;
use crate::tensor::{DenseTensor, SiteLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterKind {
    Full,
    Lora,
    /// `d_in = d1·d2`, input-side factor replaced by two cores over bond `chi`.
    MpsAdapt {
        d1: usize,
        d2: usize,
        chi: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub d_out: usize,
    pub d_in: usize,
    /// rank budget, ignored for `Full`
    pub r: usize,
    pub alpha: f64,
    pub kind: AdapterKind,
}

impl AdapterSpec {
    pub fn full(d_out: usize, d_in: usize) -> Self {
        Self { d_out, d_in, r: 0, alpha: 1.0, kind: AdapterKind::Full }
    }

    pub fn lora(d_out: usize, d_in: usize, r: usize) -> Self {
        Self { d_out, d_in, r, alpha: r as f64, kind: AdapterKind::Lora }
    }

    pub fn mps_adapt(d_out: usize, d_in: usize, r: usize, d1: usize, d2: usize, chi: usize) -> Self {
        Self { d_out, d_in, r, alpha: r as f64, kind: AdapterKind::MpsAdapt { d1, d2, chi } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_out == 0 || self.d_in == 0 {
            return Err(invalid(format!("adapter dims must be positive, got {}x{}", self.d_out, self.d_in)));
        }
        match self.kind {
            AdapterKind::Full => Ok(()),
            AdapterKind::Lora => {
                if self.r == 0 || self.r > self.d_out.min(self.d_in) {
                    return Err(invalid(format!(
                        "lora rank must be in 1..={}, got {}",
                        self.d_out.min(self.d_in),
                        self.r
                    )));
                }
                Ok(())
            }
            AdapterKind::MpsAdapt { d1, d2, chi } => {
                if self.r == 0 {
                    return Err(invalid("mps adapter rank must be positive"));
                }
                if d1 * d2 != self.d_in {
                    return Err(invalid(format!("d1·d2 = {} must equal d_in = {}", d1 * d2, self.d_in)));
                }
                if chi == 0 || chi > self.r.min(d1).min(d2) {
                    return Err(invalid(format!("chi must be in 1..={}, got {chi}", self.r.min(d1).min(d2))));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for AdapterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AdapterKind::Full => write!(f, "full:{}x{}", self.d_out, self.d_in),
            AdapterKind::Lora => write!(f, "lora:{}x{}:r={}", self.d_out, self.d_in, self.r),
            AdapterKind::MpsAdapt { d1, d2, chi } => {
                write!(f, "mps:{}x{}:r={}:d1={d1}:d2={d2}:chi={chi}", self.d_out, self.d_in, self.r)
            }
        }
    }
}

/// Parses `full:4096x4096`, `lora:4096x4096:r=256` and
/// `mps:4096x4096:r=256:d1=64:d2=64:chi=32`.
impl FromStr for AdapterSpec {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let dims = parts.next().ok_or_else(|| invalid(format!("missing dims in adapter spec {s:?}")))?;
        let (d_out, d_in) = dims
            .split_once('x')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| invalid(format!("bad dims {dims:?} in adapter spec {s:?}")))?;
        let mut kv = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| invalid(format!("expected key=value, got {p:?}")))?;
            let v: usize = v.parse().map_err(|_| invalid(format!("bad integer in {p:?}")))?;
            kv.insert(k.to_owned(), v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| invalid(format!("adapter spec {s:?} is missing {k}=")));
        let spec = match kind {
            "full" => AdapterSpec::full(d_out, d_in),
            "lora" => AdapterSpec::lora(d_out, d_in, get("r")?),
            "mps" | "mps_adapt" => AdapterSpec::mps_adapt(d_out, d_in, get("r")?, get("d1")?, get("d2")?, get("chi")?),
            other => return Err(invalid(format!("unknown adapter kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Trainable parameter count of an adapter.
pub fn param_count(spec: &AdapterSpec) -> Result<u64> {
    spec.validate()?;
    let (o, i, r) = (spec.d_out as u64, spec.d_in as u64, spec.r as u64);
    Ok(match spec.kind {
        AdapterKind::Full => o * i,
        AdapterKind::Lora => o * r + r * i,
        AdapterKind::MpsAdapt { d1, d2, chi } => o * r + r * chi as u64 * d1 as u64 + chi as u64 * d2 as u64,
    })
}

/// `ΔW = (α/r)·B·A`.
pub fn lora_update(b: &DenseTensor, a: &DenseTensor, alpha: f64, r: usize) -> Result<DenseTensor> {
    let (_, rb) = b.shape2()?;
    let (ra, _) = a.shape2()?;
    if r == 0 {
        return Err(invalid("rank must be positive"));
    }
    if rb != r || ra != r {
        return Err(shape(format!("B has {rb} columns and A has {ra} rows, expected rank {r}")));
    }
    Ok(matmul(b, a)?.scale(alpha / r as f64))
}

fn dims3(t: &DenseTensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.dims() {
        &[a, b, c] => Ok((a, b, c)),
        other => Err(shape(format!("{what} must be order 3, got dims {other:?}"))),
    }
}

/// `A_MPS[a, i1·d2 + i2] = Σ_α core1[a, α, i1] · core2[α, 0, i2]`.
pub fn mps_adapter_materialize(core1: &DenseTensor, core2: &DenseTensor) -> Result<DenseTensor> {
    let (r, chi, d1) = dims3(core1, "core1")?;
    let (chi2, one, d2) = dims3(core2, "core2")?;
    if chi != chi2 || one != 1 {
        return Err(shape(format!("core1 {:?} and core2 {:?} do not share a bond", core1.dims(), core2.dims())));
    }
    let c1 = core1.data();
    let c2 = core2.data();
    let mut out = vec![0.0; r * d1 * d2];
    for a in 0..r {
        for alpha in 0..chi {
            let right = &c2[alpha * d2..(alpha + 1) * d2];
            for i1 in 0..d1 {
                let w = c1[(a * chi + alpha) * d1 + i1];
                let dst = &mut out[(a * d1 + i1) * d2..(a * d1 + i1 + 1) * d2];
                for (o, &v) in dst.iter_mut().zip(right) {
                    *o += w * v;
                }
            }
        }
    }
    DenseTensor::matrix(r, d1 * d2, out)
}

/// `ΔW = (α/r)·B·A_MPS`.
pub fn mps_adapter_update(
    b: &DenseTensor,
    core1: &DenseTensor,
    core2: &DenseTensor,
    alpha: f64,
    r: usize,
) -> Result<DenseTensor> {
    lora_update(b, &mps_adapter_materialize(core1, core2)?, alpha, r)
}

/// `B·A` with i.i.d. standard normal factors, both drawn from `seed`.
pub fn gaussian_lora(d_out: usize, d_in: usize, r: usize, seed: u64) -> Result<DenseTensor> {
    let b = sample_gaussian_matrix(d_out, r, seed::derive(seed, &[0]))?;
    let a = sample_gaussian_matrix(r, d_in, seed::derive(seed, &[1]))?;
    lora_update(&b, &a, r as f64, r)
}

/// Number of leading factors whose product first reaches `r`.
fn sites_to_reach(sites: impl Iterator<Item = usize>, r: usize) -> usize {
    let mut prod = 1usize;
    let mut k = 0;
    for d in sites {
        if prod >= r {
            break;
        }
        prod = prod.saturating_mul(d);
        k += 1;
    }
    k
}

/// Cuts away from both the outer edges and the row–column cut.
///
/// Row side: `k0 + m ≤ k ≤ n_out − m`, where `k0` is the number of leading
/// sites needed to reach dimension `r`; column side mirrored. The margin `m`
/// is 2, falling back to 1 when both windows are empty.
pub fn interior_cuts(layout: &SiteLayout, r: usize) -> Vec<usize> {
    let n_out = layout.out_sites.len();
    let n = layout.n_sites();
    let k_row = sites_to_reach(layout.out_sites.iter().copied(), r);
    let k_col = sites_to_reach(layout.in_sites.iter().rev().copied(), r);
    let window = |margin: usize| -> Vec<usize> {
        let rows = (k_row + margin)..=n_out.saturating_sub(margin);
        let cols = (n_out + margin)..=n.saturating_sub(k_col + margin);
        rows.chain(cols).filter(|&k| k >= 1 && k < n).collect()
    };
    let wide = window(2);
    if wide.is_empty() {
        window(1)
    } else {
        wide
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub rank: usize,
    pub row_column_cut: usize,
    pub s_rowcol: f64,
    /// `log r` in the profile's base
    pub bound: f64,
    pub interior_cuts: Vec<usize>,
    pub interior_max: Option<f64>,
    pub interior_mean: Option<f64>,
    pub passes: bool,
    pub profile: EntanglementProfile,
}

/// Compare the row–column-cut entropy of `delta_w` with `log r`.
pub fn valley_check(delta_w: &DenseTensor, r: usize, base: LogBase) -> Result<ValleyReport> {
    if r == 0 {
        return Err(invalid("rank budget must be positive"));
    }
    let (rows, cols) = delta_w.shape2()?;
    let layout = SiteLayout::for_matrix(rows, cols)?;
    if layout.out_sites.is_empty() || layout.in_sites.is_empty() {
        return Err(invalid(format!("{rows}x{cols} has no row-column cut")));
    }
    let prof = profile(delta_w, None, base)?;
    let cut = layout.row_column_cut();
    let s_rowcol = prof.at(cut).expect("row-column cut is a valid bond").entropy;
    let bound = base.log(r as f64);
    let interior = interior_cuts(&layout, r);
    let values: Vec<f64> = interior.iter().filter_map(|&k| prof.at(k).map(|c| c.entropy)).collect();
    Ok(ValleyReport {
        rank: r,
        row_column_cut: cut,
        s_rowcol,
        bound,
        interior_max: values.iter().copied().reduce(f64::max),
        interior_mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        interior_cuts: interior,
        passes: s_rowcol <= bound + 1e-9,
        profile: prof,
    })
}
