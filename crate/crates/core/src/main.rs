// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use aent::adapters::AdapterSpec;
use aent::experiments::{
    run_adapters_count, run_attn, run_cardy, run_mp_compare, run_page_bench, run_profile, run_valley,
    AdaptersCountConfig, AttnConfig, CardyConfig, MatrixSource, MpCompareConfig, PageBenchConfig, ProfileConfig,
    ValleyConfig,
};
use aent::matrix_file::{self, Dtype};
use aent::report::ExperimentReport;
use aent::rmt::sample_gaussian_matrix;
use aent::{Error, LogBase, Result};

#[derive(Parser)]
#[command(name = "aent", version, about = "Entanglement profiles of matrices via MPS decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Output {
    /// Write the primary table as CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every table as `<name>.csv` plus `report.json` into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Entanglement profile of a matrix file.
    Profile {
        input: PathBuf,
        #[arg(long)]
        chi_max: Option<usize>,
        #[arg(long, default_value = "2")]
        base: LogBase,
        #[command(flatten)]
        output: Output,
    },
    /// Mean Gaussian-matrix profile against the Page curve.
    PageBench {
        #[arg(long, default_value_t = 1024)]
        size: usize,
        #[arg(long)]
        chi_max: Option<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "2")]
        base: LogBase,
        #[arg(long, default_value_t = 4)]
        min_dim: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Logarithmic growth of attention-matrix entropy with sequence length.
    Cardy {
        #[arg(long = "t-grid", value_delimiter = ',', default_value = "64,128,256,512,1024,2048")]
        t_grid: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// context dimension d = d_mult·T
        #[arg(long, default_value_t = 16)]
        d_mult: usize,
        /// head dimension d_qk = dqk_mult·T
        #[arg(long, default_value_t = 1.0)]
        dqk_mult: f64,
        #[arg(long, default_value_t = 0.5)]
        qk_weight_var: f64,
        #[arg(long)]
        causal: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Row-column bottleneck of Gaussian low-rank updates.
    Valley {
        #[arg(long, default_value_t = 64)]
        dout: usize,
        #[arg(long, default_value_t = 64)]
        din: usize,
        #[arg(long = "rank", value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "2")]
        base: LogBase,
        #[command(flatten)]
        output: Output,
    },
    /// Reduced-density-matrix spectrum at one cut against Marchenko-Pastur.
    MpCompare {
        /// matrix file; omit when using --gaussian
        input: Option<PathBuf>,
        /// sample a ROWSxCOLS Gaussian matrix instead of reading a file
        #[arg(long, value_parser = parse_dims, conflicts_with = "input")]
        gaussian: Option<(usize, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cut: Option<usize>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Profiles of synthetic attention matrices and output operators.
    Attn {
        #[arg(long = "t", default_value_t = 1024)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 16)]
        d_mult: usize,
        #[arg(long, default_value_t = 64)]
        d_qk: usize,
        #[arg(long)]
        causal: bool,
        /// rotary embedding with this angle base
        #[arg(long, num_args = 0..=1, default_missing_value = "10000")]
        rope: Option<f64>,
        /// also profile A under the opposite masking
        #[arg(long)]
        ablation: bool,
        #[arg(long, default_value_t = 0.5)]
        qk_weight_var: f64,
        #[arg(long, default_value = "2")]
        base: LogBase,
        #[command(flatten)]
        output: Output,
    },
    /// Parameter counts of adapter specs, e.g. `lora:4096x4096:r=256`.
    AdaptersCount {
        #[arg(long = "spec")]
        specs: Vec<AdapterSpec>,
        #[command(flatten)]
        output: Output,
    },
    /// Write an i.i.d. standard normal matrix file.
    GenGaussian {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        f32: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once('x').ok_or("expected ROWSxCOLS")?;
    Ok((
        r.parse().map_err(|_| format!("bad row count {r:?}"))?,
        c.parse().map_err(|_| format!("bad column count {c:?}"))?,
    ))
}

fn emit(mut report: ExperimentReport, output: &Output, started: Instant) -> Result<()> {
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    let primary = report.tables.first().map(|t| t.to_csv()).unwrap_or_default();
    match &output.out {
        Some(path) => fs::write(path, &primary)?,
        None if output.out_dir.is_none() => std::io::stdout().lock().write_all(primary.as_bytes())?,
        None => {}
    }
    if let Some(dir) = &output.out_dir {
        fs::create_dir_all(dir)?;
        for t in &report.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        fs::write(dir.join("report.json"), report.to_json())?;
    }
    if let Some(path) = &output.report {
        fs::write(path, report.to_json())?;
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Profile { input, chi_max, base, output } => {
            let matrix = matrix_file::read(&input)?;
            let cfg = ProfileConfig { input: display(&input), chi_max, base };
            emit(run_profile(&cfg, &matrix)?, &output, started)
        }
        Command::PageBench { size, chi_max, seeds, seed, base, min_dim, output } => {
            let cfg = PageBenchConfig { size, chi_max, seeds, seed, base, min_dim };
            emit(run_page_bench(&cfg)?.0, &output, started)
        }
        Command::Cardy { t_grid, seeds, seed, d_mult, dqk_mult, qk_weight_var, causal, output } => {
            let cfg =
                CardyConfig { t_grid, seeds, seed, d_mult, dqk_mult, qk_weight_var, causal, ..Default::default() };
            emit(run_cardy(&cfg)?.0, &output, started)
        }
        Command::Valley { dout, din, ranks, seeds, seed, base, output } => {
            let cfg = ValleyConfig { d_out: dout, d_in: din, ranks, seeds, seed, base };
            emit(run_valley(&cfg)?.0, &output, started)
        }
        Command::MpCompare { input, gaussian, seed, cut, bins, output } => {
            let (source, matrix) = match (input, gaussian) {
                (Some(path), None) => {
                    let m = matrix_file::read(&path)?;
                    (MatrixSource::File { path: display(&path) }, m)
                }
                (None, Some((rows, cols))) => {
                    (MatrixSource::Gaussian { rows, cols, seed }, sample_gaussian_matrix(rows, cols, seed)?)
                }
                _ => return Err(Error::InvalidArgument("give either an input file or --gaussian".into())),
            };
            let cfg = MpCompareConfig { source, cut, bins };
            emit(run_mp_compare(&cfg, &matrix)?.0, &output, started)
        }
        Command::Attn { t, seeds, seed, heads, d_mult, d_qk, causal, rope, ablation, qk_weight_var, base, output } => {
            let cfg = AttnConfig {
                t,
                seeds,
                seed,
                heads,
                d_mult,
                d_qk,
                causal,
                rope_base: rope,
                ablation,
                qk_weight_var,
                base,
            };
            emit(run_attn(&cfg)?.0, &output, started)
        }
        Command::AdaptersCount { specs, output } => {
            let cfg = if specs.is_empty() { AdaptersCountConfig::default() } else { AdaptersCountConfig { specs } };
            emit(run_adapters_count(&cfg)?.0, &output, started)
        }
        Command::GenGaussian { rows, cols, seed, f32, out } => {
            let m = sample_gaussian_matrix(rows, cols, seed)?;
            matrix_file::write(&out, &m, if f32 { Dtype::F32 } else { Dtype::F64 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Error::InvalidArgument(String::new()).exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aent: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
