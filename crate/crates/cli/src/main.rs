//! `msboost`: simulations, transition reports, model fits and conditional
//! MSE from a TOML config.
//!
//! Exit codes: 0 on success (including an indeterminate recommendation),
//! 2 on config errors, 3 on runtime errors.

mod cmse;
mod config;
mod data;
mod error;
mod fit;
mod output;
mod simulate;
mod transition;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "msboost", version, about = "Multi-study boosting: merge or ensemble?")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation experiment and write results, summary and manifest CSVs.
    Simulate(CommonArgs),
    /// Compute the transition point or interval for user data.
    Transition(CommonArgs),
    /// Fit merged and/or ensemble models and write coefficients.
    Fit(CommonArgs),
    /// Conditional MSE of one coefficient along component-wise fits.
    Cmse(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "MSBOOST_THREADS")]
    threads: Option<usize>,
}

type CommandFn = fn(&LoadedConfig, &std::path::Path) -> CliResult<()>;

fn run(cli: Cli) -> CliResult<()> {
    let (args, command): (&CommonArgs, CommandFn) = match &cli.command {
        Command::Simulate(a) => (a, simulate::run),
        Command::Transition(a) => (a, transition::run),
        Command::Fit(a) => (a, fit::run),
        Command::Cmse(a) => (a, cmse::run),
    };
    let cfg = LoadedConfig::load(&args.config)?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let out = match (&args.out, &cfg.config.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => cfg.resolve(dir),
        (None, None) => PathBuf::from("msboost_out"),
    };
    std::fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.display().to_string(),
        source,
    })?;
    command(&cfg, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
