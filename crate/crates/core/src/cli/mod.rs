//! Command-line front end: configuration, orchestration and report emission.
//!
//! Every subcommand writes its CSV files and a `summary.csv` (`check,value,threshold,pass`)
//! into the output directory, together with the resolved `config.toml`. Failing checks are
//! also printed to stderr as `FAIL check=<name> value=<v> threshold=<t>`.
//!
//! Exit status: 0 when every check passes, 2 when a check fails, 3 on a configuration or
//! usage error, 1 on any other error.

pub mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use commands::{write_summary, CheckRow};
pub use config::{RunConfig, DEFAULTS};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ospde",
    version,
    about = "Penalized obstacle solver and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; omitted keys take their reference defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding `run.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample the jump-diffusion and test its law.
    SimulateLevy,
    /// Solve a fixture without obstacle and compare with the semigroup solution.
    SolveLinear,
    /// Run the penalization schedule on the configured fixture.
    SolveObstacle,
    /// Test the pathwise representation of the solution.
    CheckRepresentation,
    /// Compare the energy of a potential with its additive functional.
    CheckEnergy,
    /// Test the comparison theorem on ordered data.
    CheckComparison,
    /// Run every check on its reference fixture, one subdirectory each.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateLevy => "simulate-levy",
            Command::SolveLinear => "solve-linear",
            Command::SolveObstacle => "solve-obstacle",
            Command::CheckRepresentation => "check-representation",
            Command::CheckEnergy => "check-energy",
            Command::CheckComparison => "check-comparison",
            Command::Report => "report",
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    match execute(&cli) {
        Ok(rows) => {
            for r in &rows {
                let tag = if r.pass { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {} value={:.4e} threshold={:.4e}",
                    r.check, r.value, r.threshold
                );
            }
            for r in rows.iter().filter(|r| !r.pass) {
                eprintln!(
                    "FAIL check={} value={} threshold={}",
                    r.check, r.value, r.threshold
                );
            }
            if rows.iter().all(|r| r.pass) {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Range(_) | Error::Refused(_) => EXIT_CONFIG,
                _ => EXIT_ERROR,
            }
        }
    }
}

/// Loads the configuration, applies the flags and runs the subcommand.
pub fn execute(cli: &Cli) -> Result<Vec<CheckRow>> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::from_toml(DEFAULTS)?,
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.display().to_string();
    }
    cfg.run.plots |= cli.plots;
    let out = PathBuf::from(&cfg.run.out);
    run_command(cli.command, &cfg, &out)
}

/// Runs one subcommand with a resolved configuration into `out`.
pub fn run_command(command: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<CheckRow>> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let rows = if command == Command::Report {
        let mut rows = Vec::new();
        for (sub, fixture) in [
            (Command::SimulateLevy, None),
            (Command::SolveLinear, Some(Fixture::Linear)),
            (Command::SolveObstacle, None),
            (Command::CheckRepresentation, Some(Fixture::Representation)),
            (Command::CheckEnergy, Some(Fixture::Potential)),
            (Command::CheckComparison, None),
        ] {
            let dir = out.join(sub.name());
            std::fs::create_dir_all(&dir)?;
            let sub_rows = dispatch(sub, fixture, cfg, &dir)?;
            write_summary(&dir.join("summary.csv"), &sub_rows)?;
            rows.extend(sub_rows.into_iter().map(|r| CheckRow {
                check: format!("{}/{}", sub.name(), r.check),
                ..r
            }));
        }
        rows
    } else {
        dispatch(command, None, cfg, out)?
    };
    write_summary(&out.join("summary.csv"), &rows)?;
    Ok(rows)
}

fn dispatch(
    command: Command,
    fixture: Option<Fixture>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<Vec<CheckRow>> {
    let fixture = match fixture {
        Some(f) => f,
        None => cfg.fixture()?,
    };
    match command {
        Command::SimulateLevy => commands::simulate_levy(cfg, out),
        Command::SolveLinear => commands::solve_linear(cfg, fixture, out),
        Command::SolveObstacle => commands::solve_obstacle_cmd(cfg, fixture, out),
        Command::CheckRepresentation => commands::check_representation(cfg, fixture, out),
        Command::CheckEnergy => commands::check_energy(cfg, fixture, out),
        Command::CheckComparison => commands::check_comparison(cfg, out),
        Command::Report => unreachable!("report is expanded by run_command"),
    }
}
