// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aent::adapters::AdapterSpec;
use aent::attention::outlier_bulk_split;
use aent::experiments::{
    run_adapters_count, run_cardy, run_mp_compare, run_page_bench, run_valley, AdaptersCountConfig, CardyConfig,
    MatrixSource, MpCompareConfig, PageBenchConfig, ValleyConfig,
};
use aent::linalg::relative_frobenius_error;
use aent::mps::{decompose, reconstruct};
use aent::rmt::{
    collapse_spectrum, density_matrix_entropies, entropy_bounds, output_collapse_check, sample_gaussian_matrix,
};
use aent::DenseTensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> aent::Result<Outcome>) -> bool {
    let started = Instant::now();
    let result = f();
    let elapsed = started.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    println!(
        "ACCEPTANCE {id:>2} {} {name}: {detail}; runtime {:.2}s (budget {}s){}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { " OVER BUDGET" },
    );
    ok
}

fn page_benchmark() -> aent::Result<Outcome> {
    let (_, full) = run_page_bench(&PageBenchConfig::default())?;
    let (_, chi) = run_page_bench(&PageBenchConfig { chi_max: Some(32), ..Default::default() })?;
    Ok(Outcome {
        pass: full.max_abs_deviation <= 0.1 && chi.plateau_max <= 5.0,
        detail: format!(
            "max |mean S - S_page| = {:.4} bits over {} cuts (<= 0.1); chi=32 plateau {:.4} bits (<= 5.0)",
            full.max_abs_deviation, full.n_cuts, chi.plateau_max
        ),
    })
}

fn reconstruction() -> aent::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let order = rng.random_range(2..=9);
        let dims: Vec<usize> = (0..order).map(|_| [2, 3, 5][rng.random_range(0..3)]).collect();
        let len: usize = dims.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = DenseTensor::new(dims, data)?;
        let back = reconstruct(&decompose(&t, None)?)?;
        worst = worst.max(relative_frobenius_error(back.data(), t.data()));
    }
    Ok(Outcome { pass: worst <= 1e-10, detail: format!("worst relative error {worst:.3e} (<= 1e-10)") })
}

fn valley() -> aent::Result<Outcome> {
    let cfg = ValleyConfig { ranks: vec![1, 2, 4, 8], ..Default::default() };
    let (_, ranks) = run_valley(&cfg)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &ranks {
        let bounded = r.pass_fraction == 1.0;
        let dip = r.rank == 1 || r.valley == Some(true);
        pass &= bounded && dip;
        parts.push(format!(
            "r={} bounded {:.0}% rowcol {:.3} interior {}",
            r.rank,
            100.0 * r.pass_fraction,
            r.mean_s_rowcol,
            r.mean_interior.map_or("-".into(), |v| format!("{v:.3}"))
        ));
    }
    Ok(Outcome { pass, detail: parts.join(", ") })
}

fn cardy() -> aent::Result<Outcome> {
    let (_, fit) = run_cardy(&CardyConfig::default())?;
    let rel = fit.relative_deviation.unwrap_or(f64::INFINITY);
    let r2 = (fit.renyi2_at_max_t - fit.renyi2_predicted).abs();
    let s1 = (fit.s1_at_max_t - 1.0).abs();
    let p1 = (fit.p1_at_max_t - fit.p1_predicted).abs();
    Ok(Outcome {
        pass: rel <= 0.15 && r2 <= 0.1 && s1 <= 0.05 && p1 <= 0.05,
        detail: format!(
            "slope {:.4} vs charge {:.4} (rel dev {:.3} <= 0.15); sigma2 {:.4}; |S2 - 2ln(1+s2)| {:.4} (<= 0.1); \
             |s1-1| {:.4} (<= 0.05); |p1-1/(1+s2)| {:.4} (<= 0.05)",
            fit.slope, fit.predicted_charge, rel, fit.sigma2_estimate, r2, s1, p1
        ),
    })
}

/// Sorted positive spectrum with entries spread over many decades.
fn random_spectrum(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = rng.random_range(2..=256);
    let style = rng.random_range(0..4);
    let mut v: Vec<f64> = (0..t)
        .map(|_| match style {
            0 => rng.random_range(0.0..1.0),
            1 => 10f64.powf(rng.random_range(-12.0..0.0)),
            2 => rng.random_range(0.9..1.0),
            _ => 10f64.powf(rng.random_range(-3.0..3.0)),
        })
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn lemma_bounds() -> aent::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut vn, mut r2, mut cert, mut literal) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let eigs = random_spectrum(&mut rng);
        let b = entropy_bounds(&eigs)?;
        let (s, s2) = density_matrix_entropies(&eigs)?;
        vn += usize::from(s > b.vn_bound + 1e-12);
        r2 += usize::from(s2 > b.renyi2_bound + 1e-12);
        cert += usize::from(b.delta1 > b.delta1_certificate * (1.0 + 1e-12) + 1e-15);
        literal += usize::from(s > b.vn_bound_closed_form + 1e-12);
    }
    Ok(Outcome {
        pass: vn == 0 && r2 == 0 && cert == 0,
        detail: format!(
            "violations: vn_bound {vn}, renyi2_bound {r2}, delta1 certificate {cert} (all 0); \
             uncapped closed form exceeded in {literal}/1000"
        ),
    })
}

fn collapse() -> aent::Result<Outcome> {
    let spectra: Vec<(usize, Vec<f64>)> = (6..=12).map(|k| 1usize << k).map(|t| (t, collapse_spectrum(t))).collect();
    let rep = output_collapse_check(&spectra)?;
    let ratio = rep.scaled_ratio.unwrap_or(f64::INFINITY);
    let last = rep.rows.last().map_or(f64::NAN, |r| r.entropy);
    let first = rep.rows.first().map_or(f64::NAN, |r| r.entropy);
    Ok(Outcome {
        pass: ratio <= 10.0 && rep.monotone_decreasing && last < first && rep.bounds_hold,
        detail: format!(
            "S*T/lnT max/min {ratio:.3} (<= 10); S from {first:.3e} to {last:.3e}, monotone {}; bounds hold {}",
            rep.monotone_decreasing, rep.bounds_hold
        ),
    })
}

fn parameter_counts() -> aent::Result<Outcome> {
    let (_, counts) = run_adapters_count(&AdaptersCountConfig::default())?;
    let expected = [16_777_216u64, 2_097_152, 1_574_912];
    let specs: Vec<String> = AdaptersCountConfig::default().specs.iter().map(AdapterSpec::to_string).collect();
    Ok(Outcome { pass: counts == expected, detail: format!("{specs:?} -> {counts:?} (expected {expected:?})") })
}

fn frobenius_identity() -> aent::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_id, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let t = rng.random_range(2..=128);
        let sharp = rng.random_range(0.1..8.0);
        let mut data: Vec<f64> = (0..t * t).map(|_| (sharp * rng.random_range(-1.0..1.0f64)).exp()).collect();
        for row in data.chunks_mut(t) {
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
        }
        let a = DenseTensor::matrix(t, t, data)?;
        let (_, perp) = outlier_bulk_split(&a)?;
        worst_id = worst_id.max((a.frobenius_norm_sq() - 1.0 - perp.frobenius_norm_sq()).abs());
        let inner = perp.data().iter().sum::<f64>() / t as f64;
        worst_orth = worst_orth.max(inner.abs());
    }
    Ok(Outcome {
        pass: worst_id <= 1e-8 && worst_orth <= 1e-10,
        detail: format!("worst identity gap {worst_id:.3e} (<= 1e-8), worst inner product {worst_orth:.3e} (<= 1e-10)"),
    })
}

fn mp_convergence() -> aent::Result<Outcome> {
    let cfg =
        MpCompareConfig { source: MatrixSource::Gaussian { rows: 1024, cols: 1024, seed: 0 }, cut: None, bins: 50 };
    let m = sample_gaussian_matrix(1024, 1024, 0)?;
    let (_, s) = run_mp_compare(&cfg, &m)?;
    Ok(Outcome {
        pass: s.ks <= 0.05,
        detail: format!("cut {} ({}x{}), c = {}, KS {:.4} (<= 0.05)", s.cut, s.d_left, s.d_right, s.c, s.ks),
    })
}

fn run_cli(dir: &Path, args: &[&str]) -> aent::Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_aent")).args(args).arg("--out-dir").arg(dir).status()?;
    if status.success() {
        Ok(())
    } else {
        Err(aent::Error::InvalidArgument(format!("aent {args:?} exited with {status}")))
    }
}

fn csv_files(dir: &Path) -> aent::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            files.push((path.file_name().unwrap_or_default().to_string_lossy().into_owned(), std::fs::read(&path)?));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> aent::Result<Outcome> {
    let scratch = tempfile::tempdir()?;
    let input = scratch.path().join("m.aent");
    let input_str = input.to_string_lossy().into_owned();
    let status = Command::new(env!("CARGO_BIN_EXE_aent"))
        .args(["gen-gaussian", "--rows", "48", "--cols", "40", "--seed", "9", "--out", &input_str])
        .status()?;
    if !status.success() {
        return Err(aent::Error::InvalidArgument("gen-gaussian failed".into()));
    }
    let first_input = std::fs::read(&input)?;
    let runs: Vec<Vec<&str>> = vec![
        vec!["profile", &input_str],
        vec!["profile", &input_str, "--chi-max", "4", "--base", "e"],
        vec!["page-bench", "--size", "64", "--seeds", "3", "--seed", "4"],
        vec!["cardy", "--t-grid", "16,32,64,128", "--seeds", "2", "--d-mult", "4", "--seed", "3"],
        vec!["valley", "--dout", "16", "--din", "32", "--rank", "1,2,4", "--seeds", "3"],
        vec!["mp-compare", &input_str, "--bins", "10"],
        vec!["mp-compare", "--gaussian", "64x64", "--seed", "2"],
        vec!["attn", "--t", "64", "--seeds", "2", "--heads", "2", "--causal", "--rope", "--ablation"],
        vec!["adapters-count"],
    ];
    let mut mismatched = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let a = scratch.path().join(format!("run{i}a"));
        let b = scratch.path().join(format!("run{i}b"));
        run_cli(&a, args)?;
        run_cli(&b, args)?;
        let (fa, fb) = (csv_files(&a)?, csv_files(&b)?);
        if fa.is_empty() || fa != fb {
            mismatched.push(args[0]);
        }
    }
    let status = Command::new(env!("CARGO_BIN_EXE_aent"))
        .args(["gen-gaussian", "--rows", "48", "--cols", "40", "--seed", "9", "--out", &input_str])
        .status()?;
    let regenerated = status.success() && std::fs::read(&input)? == first_input;
    Ok(Outcome {
        pass: mismatched.is_empty() && regenerated,
        detail: format!(
            "{} invocations re-run, mismatched: {mismatched:?}; gen-gaussian byte-identical {regenerated}",
            runs.len()
        ),
    })
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        check(1, "page benchmark", secs(120), page_benchmark),
        check(2, "reconstruction fidelity", secs(60), reconstruction),
        check(3, "entanglement valley", secs(60), valley),
        check(4, "attention log-growth law", secs(600), cardy),
        check(5, "stable-rank entropy bounds", secs(30), lemma_bounds),
        check(6, "output collapse", secs(10), collapse),
        check(7, "parameter counts", secs(1), parameter_counts),
        check(8, "frobenius identity and split orthogonality", secs(10), frobenius_identity),
        check(9, "marchenko-pastur convergence", secs(60), mp_convergence),
        check(10, "cli determinism", secs(300), determinism),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("ACCEPTANCE summary: {passed}/{} passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
