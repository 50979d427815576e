// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment drivers behind the CLI subcommands. Each takes a serializable
//! config, derives per-task seeds from it, runs tasks in parallel and
//! assembles tables in a fixed order, so identical configs give identical
//! tables.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{gaussian_lora, param_count, valley_check, AdapterKind, AdapterSpec, ValleyReport};
use crate::attention::{
    mask_ablation, outlier_bulk_split, output_operator, AttentionScene, ProjectionMode, SceneConfig,
};
use crate::entropy::{page_entropy, profile, EntanglementProfile, LogBase};
use crate::error::{invalid, Result};
use crate::linalg::matrix_singular_values;
use crate::mps::cut_spectrum;
use crate::report::{Cell, ExperimentReport, Table};
use crate::rmt::{
    cardy_sample, estimate_sigma2, fit_cardy, ks_distance, rescaled_rdm_eigenvalues, sample_gaussian_matrix,
    CardySample, SpectralLaw,
};
use crate::seed;
use crate::tensor::{tensorize, DenseTensor};

pub const PROFILE_COLUMNS: [&str; 7] = ["cut", "d_left", "d_right", "chi", "entropy", "renyi2", "normalized"];

fn is_power_of_two(n: usize) -> bool {
    n >= 1 && n.is_power_of_two()
}

/// The per-cut profile schema.
pub fn profile_table(name: &str, prof: &EntanglementProfile) -> Result<Table> {
    let mut t = Table::new(name, &PROFILE_COLUMNS);
    for c in &prof.cuts {
        t.push(vec![
            c.cut.into(),
            c.d_left.into(),
            c.d_right.into(),
            c.chi.into(),
            c.entropy.into(),
            c.renyi2.into(),
            c.normalized.into(),
        ])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub input: String,
    pub chi_max: Option<usize>,
    pub base: LogBase,
}

pub fn run_profile(config: &ProfileConfig, matrix: &DenseTensor) -> Result<ExperimentReport> {
    let prof = profile(matrix, config.chi_max, config.base)?;
    let mut report = ExperimentReport::new("profile", config)?;
    report.set_summary(serde_json::json!({
        "dims": matrix.dims(),
        "row_column_cut": prof.row_column_cut,
        "max_entropy": prof.max_entropy(),
    }))?;
    report.tables.push(profile_table("profile", &prof)?);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBenchConfig {
    pub size: usize,
    pub chi_max: Option<usize>,
    pub seeds: usize,
    pub seed: u64,
    pub base: LogBase,
    /// cuts with `min(d_L, d_R)` below this are left out of the deviation
    pub min_dim: usize,
}

impl Default for PageBenchConfig {
    fn default() -> Self {
        Self { size: 1024, chi_max: None, seeds: 10, seed: 0, base: LogBase::Two, min_dim: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBenchSummary {
    pub n_cuts: usize,
    pub max_abs_deviation: f64,
    pub plateau_max: f64,
    pub central_cut: usize,
    pub central_mean_entropy: f64,
}

pub fn run_page_bench(config: &PageBenchConfig) -> Result<(ExperimentReport, PageBenchSummary)> {
    if !is_power_of_two(config.size) || config.size < 4 {
        return Err(invalid(format!("size must be a power of two >= 4, got {}", config.size)));
    }
    if config.seeds == 0 {
        return Err(invalid("need at least one seed"));
    }
    let profiles: Vec<EntanglementProfile> = (0..config.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let m = sample_gaussian_matrix(config.size, config.size, seed::derive(config.seed, &[s]))?;
            profile(&m, config.chi_max, config.base)
        })
        .collect::<Result<_>>()?;

    let n = profiles.len() as f64;
    let mut table = Table::new(
        "page",
        &["cut", "d_left", "d_right", "mean_entropy", "std_entropy", "page_entropy", "abs_deviation", "included"],
    );
    let mut max_dev: f64 = 0.0;
    let mut plateau: f64 = 0.0;
    for (i, c) in profiles[0].cuts.iter().enumerate() {
        let vals: Vec<f64> = profiles.iter().map(|p| p.cuts[i].entropy).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (small, large) = (c.d_left.min(c.d_right), c.d_left.max(c.d_right));
        let page = config.base.from_nats(page_entropy(small, large)? * LN_2);
        let dev = (mean - page).abs();
        let included = small >= config.min_dim;
        if included {
            max_dev = max_dev.max(dev);
        }
        plateau = plateau.max(mean);
        table.push(vec![
            c.cut.into(),
            c.d_left.into(),
            c.d_right.into(),
            mean.into(),
            var.sqrt().into(),
            page.into(),
            dev.into(),
            included.into(),
        ])?;
    }
    let central = profiles[0].cuts.len().div_ceil(2);
    let summary = PageBenchSummary {
        n_cuts: profiles[0].cuts.len(),
        max_abs_deviation: max_dev,
        plateau_max: plateau,
        central_cut: central,
        central_mean_entropy: profiles.iter().map(|p| p.at(central).map_or(0.0, |c| c.entropy)).sum::<f64>() / n,
    };
    let mut report = ExperimentReport::new("page-bench", config)?;
    report.set_summary(&summary)?;
    report.tables.push(table);
    Ok((report, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardyConfig {
    pub t_grid: Vec<usize>,
    pub seeds: usize,
    pub seed: u64,
    /// context dimension `d = d_mult · T`
    pub d_mult: usize,
    /// head dimension `d_qk = max(1, round(dqk_mult · T))`
    pub dqk_mult: f64,
    pub qk_weight_var: f64,
    pub causal: bool,
    pub mode: ProjectionMode,
}

impl Default for CardyConfig {
    fn default() -> Self {
        Self {
            t_grid: vec![64, 128, 256, 512, 1024, 2048],
            seeds: 5,
            seed: 0,
            d_mult: 16,
            dqk_mult: 1.0,
            qk_weight_var: SceneConfig::DEFAULT_QK_WEIGHT_VAR,
            causal: false,
            mode: ProjectionMode::Direct,
        }
    }
}

impl CardyConfig {
    fn scene(&self, t: usize, s: u64) -> SceneConfig {
        let d_qk = ((self.dqk_mult * t as f64).round() as usize).max(1);
        SceneConfig {
            t,
            d: self.d_mult * t,
            d_qk,
            d_v: d_qk,
            seed: seed::derive(self.seed, &[t as u64, s]),
            causal: self.causal,
            rope_base: None,
            qk_weight_var: self.qk_weight_var,
            mode: self.mode,
        }
    }
}

pub fn run_cardy(config: &CardyConfig) -> Result<(ExperimentReport, crate::rmt::CardyFit)> {
    let mut grid = config.t_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 4 {
        return Err(invalid(format!("need at least 4 distinct lengths, got {}", grid.len())));
    }
    if config.seeds == 0 || config.d_mult == 0 || config.dqk_mult.is_nan() || config.dqk_mult <= 0.0 {
        return Err(invalid("seeds, d_mult and dqk_mult must be positive"));
    }
    let t_max = *grid.last().expect("non-empty");
    let tasks: Vec<(usize, u64)> = grid.iter().flat_map(|&t| (0..config.seeds as u64).map(move |s| (t, s))).collect();
    let samples: Vec<CardySample> = tasks
        .par_iter()
        .map(|&(t, s)| {
            let scene = AttentionScene::build(&config.scene(t, s))?;
            cardy_sample(&scene.a, t == t_max)
        })
        .collect::<Result<_>>()?;
    let fit = fit_cardy(&samples)?;

    let mut per_sample = Table::new("samples", &["T", "seed_index", "entropy", "renyi2", "s1", "p1", "sigma2"]);
    for (&(t, s), smp) in tasks.iter().zip(&samples) {
        let st = &smp.stats;
        per_sample.push(vec![
            t.into(),
            s.into(),
            st.entropy.into(),
            st.renyi2.into(),
            st.s1.into(),
            st.p1.into(),
            st.sigma2.into(),
        ])?;
    }
    let mut points = Table::new("points", &["T", "ln_T", "samples", "mean_entropy", "mean_renyi2"]);
    for p in &fit.points {
        points.push(vec![p.t.into(), (p.t as f64).ln().into(), p.samples.into(), p.entropy.into(), p.renyi2.into()])?;
    }
    let mut report = ExperimentReport::new("cardy", config)?;
    let mut summary = serde_json::to_value(&fit).map_err(|e| crate::Error::Format(e.to_string()))?;
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("points");
        obj.insert("entropy_unit".into(), "nats".into());
    }
    report.summary = summary;
    report.tables.push(points);
    report.tables.push(per_sample);
    Ok((report, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyConfig {
    pub d_out: usize,
    pub d_in: usize,
    pub ranks: Vec<usize>,
    pub seeds: usize,
    pub seed: u64,
    pub base: LogBase,
}

impl Default for ValleyConfig {
    fn default() -> Self {
        Self { d_out: 64, d_in: 64, ranks: vec![1, 2, 4, 8, 16, 32], seeds: 20, seed: 0, base: LogBase::Two }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyRankSummary {
    pub rank: usize,
    pub bound: f64,
    pub mean_s_rowcol: f64,
    pub max_s_rowcol: f64,
    pub mean_interior: Option<f64>,
    pub max_interior: Option<f64>,
    pub pass_fraction: f64,
    /// mean interior entropy above mean row–column entropy
    pub valley: Option<bool>,
}

pub fn run_valley(config: &ValleyConfig) -> Result<(ExperimentReport, Vec<ValleyRankSummary>)> {
    if !is_power_of_two(config.d_out) || !is_power_of_two(config.d_in) || config.d_out < 2 || config.d_in < 2 {
        return Err(invalid(format!("valley dims must be powers of two >= 2, got {}x{}", config.d_out, config.d_in)));
    }
    if config.seeds == 0 || config.ranks.is_empty() {
        return Err(invalid("need at least one rank and one seed"));
    }
    let tasks: Vec<(usize, u64)> =
        config.ranks.iter().flat_map(|&r| (0..config.seeds as u64).map(move |s| (r, s))).collect();
    let reports: Vec<ValleyReport> = tasks
        .par_iter()
        .map(|&(r, s)| {
            let dw = gaussian_lora(config.d_out, config.d_in, r, seed::derive(config.seed, &[r as u64, s]))?;
            valley_check(&dw, r, config.base)
        })
        .collect::<Result<_>>()?;

    let mut instances = Table::new(
        "instances",
        &["rank", "seed_index", "s_rowcol", "bound", "interior_max", "interior_mean", "passes"],
    );
    for (&(r, s), rep) in tasks.iter().zip(&reports) {
        instances.push(vec![
            r.into(),
            s.into(),
            rep.s_rowcol.into(),
            rep.bound.into(),
            rep.interior_max.into(),
            rep.interior_mean.into(),
            rep.passes.into(),
        ])?;
    }

    let mut summaries = Vec::new();
    let mut ranks_table = Table::new(
        "ranks",
        &["rank", "bound", "mean_s_rowcol", "max_s_rowcol", "mean_interior", "max_interior", "pass_fraction", "valley"],
    );
    let mut mean_profiles = Table::new("mean_profiles", &["rank", "cut", "mean_entropy"]);
    for &r in &config.ranks {
        let group: Vec<&ValleyReport> =
            tasks.iter().zip(&reports).filter(|((rr, _), _)| *rr == r).map(|(_, rep)| rep).collect();
        let n = group.len() as f64;
        let mean_rc = group.iter().map(|g| g.s_rowcol).sum::<f64>() / n;
        let interior: Vec<f64> = group.iter().filter_map(|g| g.interior_mean).collect();
        let mean_interior = (!interior.is_empty()).then(|| interior.iter().sum::<f64>() / interior.len() as f64);
        let summary = ValleyRankSummary {
            rank: r,
            bound: group[0].bound,
            mean_s_rowcol: mean_rc,
            max_s_rowcol: group.iter().map(|g| g.s_rowcol).fold(f64::NEG_INFINITY, f64::max),
            mean_interior,
            max_interior: group.iter().filter_map(|g| g.interior_max).reduce(f64::max),
            pass_fraction: group.iter().filter(|g| g.passes).count() as f64 / n,
            valley: mean_interior.map(|m| m > mean_rc),
        };
        ranks_table.push(vec![
            r.into(),
            summary.bound.into(),
            summary.mean_s_rowcol.into(),
            summary.max_s_rowcol.into(),
            summary.mean_interior.into(),
            summary.max_interior.into(),
            summary.pass_fraction.into(),
            summary.valley.into(),
        ])?;
        for (i, c) in group[0].profile.cuts.iter().enumerate() {
            let mean = group.iter().map(|g| g.profile.cuts[i].entropy).sum::<f64>() / n;
            mean_profiles.push(vec![r.into(), c.cut.into(), mean.into()])?;
        }
        summaries.push(summary);
    }
    let mut report = ExperimentReport::new("valley", config)?;
    report.set_summary(serde_json::json!({ "ranks": &summaries, "row_column_cut": reports[0].row_column_cut }))?;
    report.tables.extend([ranks_table, instances, mean_profiles]);
    Ok((report, summaries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSource {
    File { path: String },
    Gaussian { rows: usize, cols: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpCompareConfig {
    pub source: MatrixSource,
    /// bond index; defaults to the middle of the site chain
    pub cut: Option<usize>,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpCompareSummary {
    pub cut: usize,
    pub d_left: usize,
    pub d_right: usize,
    pub d_min: usize,
    pub c: f64,
    pub eigenvalues: usize,
    pub ks: f64,
}

pub fn run_mp_compare(config: &MpCompareConfig, matrix: &DenseTensor) -> Result<(ExperimentReport, MpCompareSummary)> {
    if config.bins == 0 {
        return Err(invalid("need at least one histogram bin"));
    }
    let (_, tensor) = tensorize(matrix)?;
    let n = tensor.order();
    if n < 2 {
        return Err(invalid("matrix has fewer than two sites, no cut to compare"));
    }
    let cut = config.cut.unwrap_or(n / 2);
    let spec = cut_spectrum(&tensor, cut)?;
    let (x, c) = rescaled_rdm_eigenvalues(&spec)?;
    let law = SpectralLaw::marchenko_pastur(c)?;
    let ks = ks_distance(&x, &law)?;

    let (_, hi) = law.support();
    let top = x.iter().copied().fold(hi, f64::max) * 1.05;
    let width = top / config.bins as f64;
    let mut counts = vec![0usize; config.bins];
    for &v in &x {
        counts[((v / width) as usize).min(config.bins - 1)] += 1;
    }
    let mut hist =
        Table::new("histogram", &["bin_lo", "bin_hi", "count", "empirical_density", "mp_density", "mp_mass"]);
    for (b, &count) in counts.iter().enumerate() {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        hist.push(vec![
            lo.into(),
            hi.into(),
            count.into(),
            (count as f64 / (x.len() as f64 * width)).into(),
            law.density(0.5 * (lo + hi)).into(),
            (law.cdf(hi) - law.cdf(lo)).into(),
        ])?;
    }
    let summary = MpCompareSummary {
        cut,
        d_left: spec.d_left,
        d_right: spec.d_right,
        d_min: spec.d_left.min(spec.d_right),
        c,
        eigenvalues: x.len(),
        ks,
    };
    let mut report = ExperimentReport::new("mp-compare", config)?;
    report.set_summary(&summary)?;
    let mut ks_table = Table::new("ks", &["cut", "d_left", "d_right", "c", "eigenvalues", "ks"]);
    ks_table.push(vec![
        cut.into(),
        spec.d_left.into(),
        spec.d_right.into(),
        Cell::Float(c),
        x.len().into(),
        ks.into(),
    ])?;
    report.tables.extend([ks_table, hist]);
    Ok((report, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnConfig {
    pub t: usize,
    pub seeds: usize,
    pub seed: u64,
    pub heads: usize,
    pub d_mult: usize,
    pub d_qk: usize,
    pub causal: bool,
    pub rope_base: Option<f64>,
    /// also profile the attention matrix with the opposite masking
    pub ablation: bool,
    pub qk_weight_var: f64,
    pub base: LogBase,
}

impl Default for AttnConfig {
    fn default() -> Self {
        Self {
            t: 1024,
            seeds: 1,
            seed: 0,
            heads: 1,
            d_mult: 16,
            d_qk: 64,
            causal: false,
            rope_base: None,
            ablation: false,
            qk_weight_var: SceneConfig::DEFAULT_QK_WEIGHT_VAR,
            base: LogBase::Two,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnSceneSummary {
    pub head: usize,
    pub seed_index: u64,
    pub s1: f64,
    pub sigma2: f64,
    pub p1: f64,
    pub bulk_opnorm_sqrt_t: f64,
    pub max_normalized_attention: f64,
    pub max_normalized_output: f64,
    pub max_normalized_ablated: Option<f64>,
}

struct AttnOutcome {
    summary: AttnSceneSummary,
    profiles: Vec<(&'static str, EntanglementProfile)>,
}

fn attn_scene(config: &AttnConfig, head: usize, s: u64) -> Result<AttnOutcome> {
    let scene = AttentionScene::build(&SceneConfig {
        t: config.t,
        d: config.d_mult * config.t,
        d_qk: config.d_qk,
        d_v: config.d_qk,
        seed: seed::derive(config.seed, &[head as u64, s]),
        causal: config.causal,
        rope_base: config.rope_base,
        qk_weight_var: config.qk_weight_var,
        mode: ProjectionMode::Direct,
    })?;
    let a_prof = profile(&scene.a, None, config.base)?;
    let sigma_prof = profile(&output_operator(&scene.x)?, None, config.base)?;
    let sv = matrix_singular_values(&scene.a)?;
    let total: f64 = sv.iter().map(|v| v * v).sum();
    let (_, perp) = outlier_bulk_split(&scene.a)?;
    let bulk_norm = matrix_singular_values(&perp)?[0];
    let mut profiles = vec![("attention", a_prof.clone()), ("output", sigma_prof.clone())];
    let mut ablated = None;
    if config.ablation {
        let ab = mask_ablation(&scene, config.base)?;
        let (name, other) = if config.causal {
            ("attention_unmasked", ab.unmasked_profile)
        } else {
            ("attention_masked", ab.masked_profile)
        };
        ablated = Some(other.max_normalized());
        profiles.push((name, other));
    }
    Ok(AttnOutcome {
        summary: AttnSceneSummary {
            head,
            seed_index: s,
            s1: sv[0],
            sigma2: estimate_sigma2(&scene.a)?,
            p1: sv[0] * sv[0] / total,
            bulk_opnorm_sqrt_t: bulk_norm * (config.t as f64).sqrt(),
            max_normalized_attention: a_prof.max_normalized(),
            max_normalized_output: sigma_prof.max_normalized(),
            max_normalized_ablated: ablated,
        },
        profiles,
    })
}

pub fn run_attn(config: &AttnConfig) -> Result<(ExperimentReport, Vec<AttnSceneSummary>)> {
    if !is_power_of_two(config.t) || config.t < 2 {
        return Err(invalid(format!("T must be a power of two >= 2, got {}", config.t)));
    }
    if config.seeds == 0 || config.heads == 0 || config.d_mult == 0 {
        return Err(invalid("seeds, heads and d_mult must be positive"));
    }
    let tasks: Vec<(usize, u64)> =
        (0..config.heads).flat_map(|h| (0..config.seeds as u64).map(move |s| (h, s))).collect();
    let outcomes: Vec<AttnOutcome> = tasks.par_iter().map(|&(h, s)| attn_scene(config, h, s)).collect::<Result<_>>()?;

    let mut columns = vec!["head", "seed_index", "operator"];
    columns.extend(PROFILE_COLUMNS);
    let mut profiles = Table::new("profiles", &columns);
    let mut scenes = Table::new(
        "scenes",
        &[
            "head",
            "seed_index",
            "s1",
            "sigma2",
            "p1",
            "bulk_opnorm_sqrt_t",
            "max_normalized_attention",
            "max_normalized_output",
            "max_normalized_ablated",
        ],
    );
    for out in &outcomes {
        let sm = &out.summary;
        for (name, prof) in &out.profiles {
            for c in &prof.cuts {
                profiles.push(vec![
                    sm.head.into(),
                    sm.seed_index.into(),
                    (*name).into(),
                    c.cut.into(),
                    c.d_left.into(),
                    c.d_right.into(),
                    c.chi.into(),
                    c.entropy.into(),
                    c.renyi2.into(),
                    c.normalized.into(),
                ])?;
            }
        }
        scenes.push(vec![
            sm.head.into(),
            sm.seed_index.into(),
            sm.s1.into(),
            sm.sigma2.into(),
            sm.p1.into(),
            sm.bulk_opnorm_sqrt_t.into(),
            sm.max_normalized_attention.into(),
            sm.max_normalized_output.into(),
            sm.max_normalized_ablated.into(),
        ])?;
    }
    let summaries: Vec<AttnSceneSummary> = outcomes.into_iter().map(|o| o.summary).collect();
    let mut report = ExperimentReport::new("attn", config)?;
    report.set_summary(serde_json::json!({
        "scenes": &summaries,
        "value_weight_var": "1/d_qk",
        "projection_sampling": ProjectionMode::Direct,
    }))?;
    report.tables.extend([scenes, profiles]);
    Ok((report, summaries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptersCountConfig {
    pub specs: Vec<AdapterSpec>,
}

impl Default for AdaptersCountConfig {
    fn default() -> Self {
        Self {
            specs: vec![
                AdapterSpec::full(4096, 4096),
                AdapterSpec::lora(4096, 4096, 256),
                AdapterSpec::mps_adapt(4096, 4096, 256, 64, 64, 32),
            ],
        }
    }
}

pub fn run_adapters_count(config: &AdaptersCountConfig) -> Result<(ExperimentReport, Vec<u64>)> {
    let mut table = Table::new("counts", &["spec", "kind", "d_out", "d_in", "rank", "params", "ratio_vs_full"]);
    let mut counts = Vec::new();
    for spec in &config.specs {
        let n = param_count(spec)?;
        let full = spec.d_out as f64 * spec.d_in as f64;
        let kind = match spec.kind {
            AdapterKind::Full => "full",
            AdapterKind::Lora => "lora",
            AdapterKind::MpsAdapt { .. } => "mps_adapt",
        };
        let rank = (!matches!(spec.kind, AdapterKind::Full)).then_some(spec.r);
        table.push(vec![
            spec.to_string().into(),
            kind.into(),
            spec.d_out.into(),
            spec.d_in.into(),
            rank.into(),
            n.into(),
            (n as f64 / full).into(),
        ])?;
        counts.push(n);
    }
    let mut report = ExperimentReport::new("adapters-count", config)?;
    report.set_summary(serde_json::json!({ "params": &counts }))?;
    report.tables.push(table);
    Ok((report, counts))
}
