//! `growthiv`: batch driver for sweeps, counterfactuals, count models and
//! synthetic panels.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! usage, 3 no qualifying specification.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use growthiv::{Country, Model, Outcome};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "growthiv", version, about = "Growth production functions with instrumented nutrient inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate every instrument set and write specs, summary and figure tables.
    Sweep(Flags),
    /// Egg-style intervention and median predictions from the best specs.
    Counterfactual(Flags),
    /// Fit the count-model battery for days with diarrhea.
    Countfit(Flags),
    /// Generate a synthetic panel with its hidden truth.
    Synth(Flags),
    /// Check the configuration and inputs without estimating anything.
    Validate(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Panel CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Price quotes CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    country: Option<Country>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    outcome: Option<Outcome>,
    /// Filter row, e.g. "cd>3,hjp>0.05"; repeat for several rows.
    #[arg(long = "filter")]
    filters: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<growthiv::Error> for Failure {
    fn from(e: growthiv::Error) -> Self {
        use growthiv::Error as E;
        let code = match &e {
            E::NoQualifyingSpec(_) => 3,
            E::Io { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::Schema { .. }
            | E::Field { .. }
            | E::DuplicateObservation { .. }
            | E::Invalid(_)
            | E::UnknownUnit { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_for(flags: Flags) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(Overrides {
        data: flags.data,
        prices: flags.prices,
        country: flags.country,
        model: flags.model,
        outcome: flags.outcome,
        filters: flags.filters,
        workers: flags.workers,
        seed: flags.seed,
        out: flags.out,
    });
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match cli.command {
        Command::Sweep(f) => ("sweep", f),
        Command::Counterfactual(f) => ("counterfactual", f),
        Command::Countfit(f) => ("countfit", f),
        Command::Synth(f) => ("synth", f),
        Command::Validate(f) => ("validate", f),
    };
    let result = config_for(flags).and_then(|cfg| match name {
        "sweep" => commands::sweep(&cfg),
        "counterfactual" => commands::counterfactual(&cfg),
        "countfit" => commands::countfit(&cfg),
        "synth" => commands::synth(&cfg),
        _ => commands::validate(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("growthiv {name}: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
