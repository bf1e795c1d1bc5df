//! Command-line front end for the `fracimp-core` toolkit.
//!
//! Subcommands read and write plain CSV and JSON files so each stage of
//! design, simulation, estimation and fitting can be run and inspected alone.

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fracimp",
    version,
    about = "Fractional-order battery impedance identification"
)]
pub struct Cli {
    /// JSON run configuration; defaults apply to every missing section.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for phases and noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design an odd random-phase multisine (multisine.json).
    Design {
        /// Also write the sampled current (excitation.csv).
        #[arg(long)]
        with_signal: bool,
    },
    /// Simulate a measurement (record.csv and record.json).
    Simulate {
        /// Use this design instead of the config excitation.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Estimate the impedance model (estimate.json, bode.csv, nyquist.csv).
    Estimate {
        #[arg(long)]
        record: PathBuf,
        /// Design file whose lines select the estimation bins.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Nonparametric impedance at the excited lines (eis_bode.csv, eis_nyquist.csv).
    Eis {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Fit Randles parameters to an estimate (fit.json).
    Fit {
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Relative error between nonparametric and parametric curves (compare.csv).
    Compare {
        /// Bode CSV from `eis`.
        #[arg(long)]
        nonpar: PathBuf,
        /// Bode CSV from `estimate`; frequencies are matched.
        #[arg(
            long,
            required_unless_present = "estimate",
            conflicts_with = "estimate"
        )]
        par: Option<PathBuf>,
        /// Estimate JSON, evaluated at the nonparametric frequencies.
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context {
        config: RunConfig::load(cli.config.as_deref())?,
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Design { with_signal } => commands::design(&ctx, *with_signal),
        Command::Simulate { spec } => commands::simulate(&ctx, spec.as_deref()),
        Command::Estimate { record, spec } => commands::estimate(&ctx, record, spec.as_deref()),
        Command::Eis { record, spec } => commands::eis(&ctx, record, spec.as_deref()),
        Command::Fit { estimate } => commands::fit(&ctx, estimate),
        Command::Compare {
            nonpar,
            par,
            estimate,
        } => commands::compare(&ctx, nonpar, par.as_deref(), estimate.as_deref()),
    }
}
