use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "voltvar", version, about = "Radial feeder power flow with local PV-inverter VAR control")]
struct Cli {
    /// Flat TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded feeder and write it in feeder-file format.
    Generate {
        #[command(flatten)]
        run: RunConfig,
        /// Output file (default: <output-dir>/feeder.txt).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the power flow of a feeder file under one control setting.
    Solve {
        #[command(flatten)]
        run: RunConfig,
        #[arg(long)]
        feeder: PathBuf,
        /// Convergence tolerance for the nonlinear solver.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Sweep the hybrid weight K and write the sweep CSV.
    Sweep {
        #[command(flatten)]
        run: RunConfig,
        /// Sweep a feeder file instead of generating one.
        #[arg(long)]
        feeder: Option<PathBuf>,
        /// Re-evaluate the baseline and best K with the nonlinear solver.
        #[arg(long)]
        validate_nonlinear: bool,
    },
    /// Run a prototype case ensemble and check it against the published figures.
    Case {
        #[command(flatten)]
        run: RunConfig,
    },
}

fn merged(file: &Option<PathBuf>, flags: RunConfig) -> Result<RunConfig, CliError> {
    Ok(match file {
        Some(path) => RunConfig::load(path)?.merged(flags),
        None => flags,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { run, output } => commands::generate(&merged(&cli.config, run)?, output),
        Command::Solve {
            run,
            feeder,
            tol,
            max_iter,
        } => commands::solve(&merged(&cli.config, run)?, &feeder, tol, max_iter),
        Command::Sweep {
            run,
            feeder,
            validate_nonlinear,
        } => commands::sweep(&merged(&cli.config, run)?, feeder.as_deref(), validate_nonlinear),
        Command::Case { run } => commands::case(&merged(&cli.config, run)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
