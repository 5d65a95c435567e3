//! Experiment driver for the binary-jump hierarchy library.
//!
//! Every subcommand reads one TOML config (all fields defaulted, schema
//! documented in [`config`]), writes its artifacts into a run directory
//! addressed by the hash of the resolved config, and exits 0 when all
//! numerical checks pass, 1 when one fails, 2 on a config error.

mod config;
mod experiments;
mod out;
mod setup;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use pairhop::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pairhop-cli", version, about = "Experiments on the binary-jump hierarchy: operator bounds, hierarchy flows, correlation reconstruction, duality checks, the scaling limit, the kinetic equation, and a particle ensemble.")]
struct Cli {
    /// Experiment config (TOML); every field has a default, so the flag
    /// may be omitted entirely.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Artifact root, overriding `output.dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    /// RNG seed, overriding `run.seed` from the config.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the kernel's rate constants and structural conditions.
    Bounds,
    /// March a random hierarchy state and record norms against their
    /// growth bounds and the weighted-scale contraction.
    EvolveHierarchy,
    /// Reconstruct one- and two-point correlations by duality, with
    /// truncation tail bounds.
    Correlations,
    /// Check the duality identity against the finite-system matrix
    /// exponential oracle.
    VerifyDuality,
    /// Sweep the scaling parameter and record the distance to the limit
    /// flow.
    VlasovStudy,
    /// Integrate the kinetic equation and record per-node invariants.
    Kinetic,
    /// Simulate the particle ensemble and estimate correlation functions.
    Mc,
    /// Run the acceptance suite and print one line per criterion.
    Verify {
        /// Comma-separated criterion ids, e.g. `1,3,4`; all when omitted.
        #[arg(long, value_name = "IDS")]
        criteria: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Bounds => experiments::bounds(&cfg),
        Command::EvolveHierarchy => experiments::evolve_hierarchy(&cfg),
        Command::Correlations => experiments::correlations(&cfg),
        Command::VerifyDuality => experiments::verify_duality(&cfg),
        Command::VlasovStudy => experiments::vlasov_study(&cfg),
        Command::Kinetic => experiments::kinetic(&cfg),
        Command::Mc => experiments::mc(&cfg),
        Command::Verify { criteria } => experiments::verify(&cfg, criteria.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("numerical checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code().clamp(1, 2) as u8)
        }
    }
}
