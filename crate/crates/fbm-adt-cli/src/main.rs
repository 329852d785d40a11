//! `fbm-adt`: fit, compare, and extrapolate accelerated degradation test
//! models with long-memory noise and unit-to-unit drift variability.
//!
//! Every subcommand is driven by one TOML configuration file; command-line
//! flags override individual settings. Errors are reported as a single
//! JSON line on stderr with exit code 1 (clap usage errors keep clap's
//! native format and exit code).

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fbm_adt::inference::FitMethod;
use fbm_adt::model::ModelVariant;

use crate::artifacts::RunStamp;
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "fbm-adt",
    version,
    about = "Accelerated degradation testing with long-memory stochastic models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the [simulate] plan.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the configured model variant to a dataset.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV (stress,unit,time,value).
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
    },
    /// Extrapolate a fitted model to the normal operating stress.
    Reliability {
        #[command(flatten)]
        common: CommonArgs,
        /// A fit-report.json produced by the fit subcommand.
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
    },
    /// Fit all four model variants and compare them on one dataset.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV (stress,unit,time,value).
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
    },
    /// Hold-one-stress-out extrapolation checks.
    Crossval {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV (stress,unit,time,value).
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the artifact directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Override the model variant: full, fixed-drift, memoryless, or basic.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Override the estimator: em, two_step, or mle_fixed.
    #[arg(long)]
    method: Option<FitMethod>,
}

impl CommonArgs {
    /// Load the config, apply flag overrides, and build the provenance
    /// stamp (hash of the file as written, plus the effective seed).
    fn resolve(&self) -> CliResult<(RunConfig, RunStamp)> {
        let (mut config, sha) = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(variant) = self.variant {
            config.fit.variant = variant;
        }
        if let Some(method) = self.method {
            config.fit.method = method;
        }
        let stamp = RunStamp {
            config_sha256: sha,
            master_seed: config.master_seed,
        };
        Ok((config, stamp))
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { common } => {
            let (config, stamp) = common.resolve()?;
            commands::run_simulate(&config, &stamp)
        }
        Command::Fit { common, data } => {
            let (config, stamp) = common.resolve()?;
            commands::run_fit(&config, &stamp, data)
        }
        Command::Reliability { common, params } => {
            let (config, stamp) = common.resolve()?;
            commands::run_reliability(&config, &stamp, params)
        }
        Command::Evaluate { common, data } => {
            let (config, stamp) = common.resolve()?;
            commands::run_evaluate(&config, &stamp, data)
        }
        Command::Crossval { common, data } => {
            let (config, stamp) = common.resolve()?;
            commands::run_crossval(&config, &stamp, data)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(1);
    }
}
