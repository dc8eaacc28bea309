//! `wfd`: command-line front end for the weighted fast diffusion laboratory.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;
mod sweep;

use output::Manifest;

#[derive(Parser, Debug)]
#[command(
    name = "wfd",
    version,
    about = "Weighted fast diffusion: profiles, functionals, spectra, evolutions and rate fits"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "wfd-out")]
    out: PathBuf,
    /// Seed for randomized fields.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    /// Parameter validation, derived constants, spectral gap and regime tags.
    Classify,
    /// Barenblatt profile on the grid, with mass and moment.
    Profile,
    /// Entropy functionals of the configured datum and of seeded random fields.
    Functionals,
    /// Discrete spectrum of the linearized operator against the closed forms.
    Spectrum,
    /// Evolution run writing `trace.csv`.
    Evolve,
    /// Rate fits and verdicts on a trace (`trace` key or `<out>/trace.csv`).
    Rates,
    /// Evolution and rate fit over a parameter lattice, one summary row per point.
    Sweep,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Classify => "classify",
            Verb::Profile => "profile",
            Verb::Functionals => "functionals",
            Verb::Spectrum => "spectrum",
            Verb::Evolve => "evolve",
            Verb::Rates => "rates",
            Verb::Sweep => "sweep",
        }
    }
}

/// Exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass = 0,
    VerdictFail = 1,
    ConfigError = 2,
    NumericalFailure = 3,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            status: Status::ConfigError,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            status: Status::NumericalFailure,
            message: message.into(),
        }
    }

    pub fn verdict(message: impl Into<String>) -> Self {
        Failure {
            status: Status::VerdictFail,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let manifest = Manifest {
        verb: cli.verb.name(),
        config: cli.config.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        jobs: cli.jobs.unwrap_or(0),
    };
    let result = match cli.verb {
        Verb::Classify => commands::classify(&manifest),
        Verb::Profile => commands::profile(&manifest),
        Verb::Functionals => commands::functionals(&manifest),
        Verb::Spectrum => commands::spectrum(&manifest),
        Verb::Evolve => commands::evolve(&manifest),
        Verb::Rates => commands::rates(&manifest),
        Verb::Sweep => sweep::sweep(&manifest),
    };
    let status = match result {
        Ok(s) => s,
        Err(f) => {
            eprintln!("wfd {}: {f}", cli.verb.name());
            f.status
        }
    };
    ExitCode::from(status as u8)
}
