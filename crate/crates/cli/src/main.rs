//! `distorted` experiment runner.

mod cache;
mod config;
mod experiments;
mod report;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use crate::cache::Cache;
use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{execute, Run};
use crate::report::{load_report, report_summary, RunReport};

/// Overrides the output directory; the only environment setting read.
const OUT_ENV: &str = "DISTORTED_OUT";

#[derive(Parser)]
#[command(name = "distorted", version, about = "Distorted Fourier analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase shifts δ_l(k), spectral checks and the phase-shift oracles.
    Spectra(RunArgs),
    /// Plancherel, inversion, diagonalization and determinism.
    TransformCheck(RunArgs),
    /// Wave-operator identities and the dispersive ratio family.
    Dispersive(RunArgs),
    /// Pseudo-product separation, Hölder harness and commutator bounds.
    Estimates(RunArgs),
    /// The derivative identity and its grid refinement.
    Identity(RunArgs),
    /// M-kernel oracle, symmetry and weak-form checks.
    Mkernel(RunArgs),
    /// Quadratic NLS evolution with Duhamel, decay and scattering diagnostics.
    Nls(RunArgs),
    /// Consolidates report.json files into summary.csv.
    Summary {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Accept parameters outside the safe ranges and potentials failing the spectral checks.
    #[arg(long = "unsafe")]
    allow_unsafe: bool,
}

fn output_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_experiment(e: Experiment, args: &RunArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.allow_unsafe |= args.allow_unsafe;
    cfg.resolve(e)?;
    let out = output_dir(args.out.as_deref(), &cfg);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let report = RunReport::new(&cfg);
    let mut run = Run { cfg: &cfg, out: out.clone(), cache: Cache::new(&out.join("cache"))?, report };
    if let Err(err) = execute(&mut run, e) {
        run.report.partial = true;
        run.report.error = Some(format!("{err:#}"));
    }
    let report = run.report;
    let path = out.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    let mut human = Vec::new();
    let text = report_summary(std::slice::from_ref(&report), &mut human)?;
    print!("{text}");
    if let Some(msg) = &report.error {
        eprintln!("error: {msg}");
    }
    eprintln!("cache: {} hits, {} misses; report {}", run.cache.hits, run.cache.misses, path.display());
    Ok(report.succeeded())
}

fn summary(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let reports = paths.iter().enumerate().map(|(i, p)| load_report(p, i)).collect::<Result<Vec<_>, _>>()?;
    let mut csv = Vec::new();
    let text = report_summary(&reports, &mut csv)?;
    print!("{text}");
    let dir = out.map(Path::to_path_buf).or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("summary.csv"), csv)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (e, args) = match &cli.command {
        Command::Spectra(a) => (Experiment::Spectra, a),
        Command::TransformCheck(a) => (Experiment::TransformCheck, a),
        Command::Dispersive(a) => (Experiment::Dispersive, a),
        Command::Estimates(a) => (Experiment::Estimates, a),
        Command::Identity(a) => (Experiment::Identity, a),
        Command::Mkernel(a) => (Experiment::Mkernel, a),
        Command::Nls(a) => (Experiment::Nls, a),
        Command::Summary { reports, out } => {
            return match summary(reports, out.as_deref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match run_experiment(e, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
