//! `rdtomo`: simulate, calibrate, fit, oracle and report.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure |
//! | 2 | invalid configuration or usage |
//! | 3 | no resonance dip in a DC trace |
//! | 4 | rank-deficient design |
//! | 5 | incomplete dataset |
//! | 6 | I/O or malformed file |
//! | 7 | unphysical state |
//! | 8 | DC calibration did not converge |

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rdtomo_core::config::RunConfig;
use rdtomo_core::io::write_all;
use rdtomo_core::pipeline;
use rdtomo_core::witness::DuanConvention;
use rdtomo_core::Error;

#[derive(Parser)]
#[command(name = "rdtomo", version, about = "Resonator-detection tomography of two-beam Gaussian states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Symmetric,
    Antisymmetric,
}

impl From<Convention> for DuanConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Symmetric => DuanConvention::Symmetric,
            Convention::Antisymmetric => DuanConvention::Antisymmetric,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset (CSV traces plus manifest).
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the DC dips of a dataset and write calibration.toml.
    Calibrate {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate, fit the covariance matrix and evaluate the witnesses.
    Fit {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        duan_convention: Option<Convention>,
    },
    /// Compare the analytic spectra with a Monte Carlo demodulation.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot data for a fit directory.
    Report {
        fit_dir: PathBuf,
        /// Dataset directory; defaults to the one recorded in the report.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render report.svg.
        #[arg(long)]
        svg: bool,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::from_toml(&text).with_context(|| format!("in {}", p.display()))?)
        }
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<&RunConfig>, fallback: &str) -> PathBuf {
    flag.or_else(|| config.and_then(|c| c.out_dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let dir = out_dir(out, Some(&cfg), "dataset");
            write_all(&dir, &pipeline::simulate(&cfg, seed)?)?;
            println!("wrote dataset to {}", dir.display());
        }
        Command::Calibrate { dataset, out } => {
            let (rep, files) = pipeline::calibrate(&dataset)?;
            write_all(&out.unwrap_or_else(|| dataset.clone()), &files)?;
            for (label, c) in [("cavity1", rep.cavity1), ("cavity2", rep.cavity2)] {
                println!(
                    "{label}: d = {:.4}, center = {:.3}, samples/bandwidth = {:.3}, P0 = {:.4}",
                    c.d, c.center_sample, c.samples_per_bandwidth, c.power_scale
                );
            }
        }
        Command::Fit { dataset, out, duan_convention } => {
            let dir = out.unwrap_or_else(|| dataset.join("fit"));
            let f = pipeline::fit(&dataset, duan_convention.map(Into::into))?;
            let mut files = f.files.clone();
            files.push(f.timing_file()?);
            write_all(&dir, &files)?;
            let r = &f.report;
            println!(
                "reduced chi2 = {:.4}, physical = {}, duan ({}) = {:.4} ± {:.4}",
                r.fit.reduced_chi_square,
                r.fit.physical,
                r.duan.convention.tag(),
                r.duan.sum,
                r.duan.uncertainty.unwrap_or(f64::NAN)
            );
            for e in &r.ppt {
                println!("  {:<16} {:.4}", e.bipartition, e.min_eigenvalue);
            }
            println!("wrote fit to {}", dir.display());
        }
        Command::Oracle { config, seed, n_samples, out } => {
            let cfg = load_config(config.as_deref())?;
            let dir = out_dir(out, None, "oracle");
            let (summary, _, files) = pipeline::oracle(&cfg, n_samples, seed)?;
            write_all(&dir, &files)?;
            println!(
                "n = {}, points = {}, max |z| = {:.3}",
                summary.n_samples, summary.grid_points, summary.max_abs_z
            );
        }
        Command::Report { fit_dir, data, out, svg } => {
            let dir = out.unwrap_or_else(|| fit_dir.join("plots"));
            let files = pipeline::report(&fit_dir, data.as_deref(), svg)?;
            write_all(&dir, &files)?;
            println!("wrote {} plot files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return if err.chain().any(|c| c.is::<std::io::Error>()) { 6 } else { 1 };
    };
    match e {
        Error::Config { .. } | Error::InvalidRecipe(_) | Error::TomlDe(_) => 2,
        Error::NoDipFound(_) => 3,
        Error::DegenerateDesign { .. } => 4,
        Error::IncompleteDataset(_) => 5,
        Error::Io(_) | Error::Csv(_) | Error::Format { .. } => 6,
        Error::NotPositiveDefinite | Error::Unphysical { .. } => 7,
        Error::CalibrationDiverged { .. } => 8,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
