//! `ebm-recon`: generate a synthetic dataset, train the energy prior, then
//! reconstruct, sample and score.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{evaluate, gen_data, reconstruct, sample, train};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "ebm-recon",
    version,
    about = "Learned energy-based posterior for undersampled parallel MRI"
)]
struct Cli {
    /// key=value file; keys match the long flag names with `_` for `-`.
    /// Flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate phantoms, coil maps, a sampling mask and noisy k-space.
    GenData(gen_data::Args),
    /// Train the energy network by contrastive maximum likelihood.
    Train(train::Args),
    /// SENSE and/or MAP reconstruction of a dataset split.
    Reconstruct(reconstruct::Args),
    /// Posterior mean and variance maps from independent Langevin chains.
    Sample(sample::Args),
    /// PSNR/SSIM per image and per method against the ground truth.
    Evaluate(evaluate::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::GenData(a) => gen_data::run(a, &file, cli.force),
        Command::Train(a) => train::run(a, &file, cli.force),
        Command::Reconstruct(a) => reconstruct::run(a, &file, cli.force),
        Command::Sample(a) => sample::run(a, &file, cli.force),
        Command::Evaluate(a) => evaluate::run(a, &file, cli.force),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ebm-recon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
