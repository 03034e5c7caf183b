//! Command line front end for the verification suites.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ptcalc::catalog::{self, CatalogEntry};
use ptcalc::config::load_config;
use ptcalc::suite::{run_command, SuiteOptions};
use ptcalc::Error;

#[derive(Parser)]
#[command(
    name = "ptcalc",
    about = "Projective tractor calculus checks on coordinate charts",
    long_about = "Verifies tractor-calculus identities, transports prolonged Killing-tensor \
                  states, and estimates solution-space dimensions by loop holonomy on built-in \
                  or configured chart geometries."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Built-in geometry name (see `list`).
    #[arg(long, global = true)]
    geometry: Option<String>,

    /// Geometry configuration file (overrides --geometry).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Killing tensor rank.
    #[arg(long, global = true, default_value_t = 1)]
    rank: usize,

    /// Sample points per check.
    #[arg(long, global = true, default_value_t = 20)]
    points: usize,

    /// Transport loops for holonomy estimates.
    #[arg(long, global = true, default_value_t = 8)]
    loops: usize,

    /// Integrator steps per loop edge / parameter unit.
    #[arg(long, global = true, default_value_t = 200)]
    steps: usize,

    /// Random seed (reports are deterministic given the seed).
    #[arg(long, global = true, default_value_t = 7041776)]
    seed: u64,

    /// Jet truncation order.
    #[arg(long = "jet-order", global = true, default_value_t = 6)]
    jet_order: usize,

    /// Multiply every tolerance (diagnostics only).
    #[arg(long = "tol-scale", global = true, default_value_t = 1.0)]
    tol_scale: f64,

    /// Write the machine-readable JSONL report here.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tractor-calculus identity sweep over sample points.
    VerifyIdentities,
    /// Projectively flat all-rank checks with the polynomial ansatz bases.
    FlatCheck,
    /// Residuals of the rank-1/2 prolongation connections on split solutions.
    ProlongResidual,
    /// Solution-space dimension by loop holonomy (+ obstruction cross-check).
    HolonomyDim,
    /// First-integral drift along geodesics and integrator convergence.
    GeodesicDrift,
    /// Everything, over the whole catalog.
    FullSuite,
    /// List built-in geometries.
    List,
}

fn resolve_entry(cli: &Cli) -> Result<Option<CatalogEntry>, Error> {
    if let Some(path) = &cli.config {
        let cfg = load_config(path)?;
        return Ok(Some(cfg.to_entry()?));
    }
    match &cli.geometry {
        Some(name) => Ok(Some(catalog::get(name)?)),
        None => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if matches!(cli.command, Command::List) {
        // tolerate closed pipes (`ptcalc list | head`)
        let mut out = std::io::stdout().lock();
        for name in catalog::names() {
            if writeln!(out, "{name}").is_err() {
                break;
            }
        }
        return ExitCode::SUCCESS;
    }

    let opts = SuiteOptions {
        points: cli.points,
        loops: cli.loops,
        steps: cli.steps,
        seed: cli.seed,
        jet_order: cli.jet_order,
        tol_scale: cli.tol_scale,
    };

    let command = match cli.command {
        Command::VerifyIdentities => "verify-identities",
        Command::FlatCheck => "flat-check",
        Command::ProlongResidual => "prolong-residual",
        Command::HolonomyDim => "holonomy-dim",
        Command::GeodesicDrift => "geodesic-drift",
        Command::FullSuite => "full-suite",
        Command::List => unreachable!(),
    };

    let entry = match resolve_entry(&cli) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    if entry.is_none() && command != "full-suite" {
        eprintln!("error: this command needs --geometry or --config");
        return ExitCode::from(2);
    }

    let report = match run_command(command, entry.as_ref(), cli.rank, &opts) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return match err {
                Error::Config(_) | Error::Io(_) | Error::Syntax { .. } | Error::Name { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            };
        }
    };

    let _ = write!(std::io::stdout().lock(), "{}", report.summary());
    if let Some(path) = &cli.report {
        if let Err(err) = std::fs::write(path, report.to_jsonl()) {
            eprintln!("error writing report: {err}");
            return ExitCode::from(2);
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
