//! Command-line front end: train inverse maps from TOML configs, query them,
//! run reference MCMC and evaluate.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod model;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};
pub use model::ModelFile;

#[derive(Debug, Parser)]
#[command(name = "invmap", version, about = "Amortized variational inference of Bayesian inverse maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an inverse map and write the model file and trace CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Posterior for one observation from a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated observation.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Reference random-walk Metropolis chain for one observation.
    Mcmc {
        #[arg(long)]
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 33_000)]
        total: usize,
        #[arg(long, default_value_t = 3_000)]
        burn: usize,
        #[arg(long, default_value_t = 30)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// KS statistics against reference chains and re-simulation error.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        ny: usize,
        #[arg(long, default_value_t = 1000)]
        npost: usize,
        #[arg(long, default_value_t = 33_000)]
        total: usize,
        #[arg(long, default_value_t = 3_000)]
        burn: usize,
        #[arg(long, default_value_t = 30)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Train { config } => commands::train(&config).map(|_| ()),
        Command::Infer {
            model,
            y,
            samples,
            seed,
            out_dir,
        } => commands::infer(&commands::InferArgs {
            model,
            y,
            samples,
            seed,
            out_dir,
        }),
        Command::Mcmc {
            problem,
            y,
            total,
            burn,
            thin,
            seed,
            out_dir,
        } => commands::mcmc(&commands::McmcArgs {
            problem,
            y,
            total,
            burn,
            thin,
            seed,
            out_dir,
        }),
        Command::Evaluate {
            model,
            ny,
            npost,
            total,
            burn,
            thin,
            seed,
            out_dir,
        } => commands::evaluate(&commands::EvaluateArgs {
            model,
            ny,
            npost,
            total,
            burn,
            thin,
            seed,
            out_dir,
        })
        .map(|_| ()),
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
