//! `coupled-otto`: batch driver producing CSV/JSON data for the coupled-mode
//! Otto engine.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation error.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupled_otto::exec::Exec;
use coupled_otto::thermo::Accounting;

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] coupled_otto::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "coupled-otto", version, about = "Coupled-mode nanomechanical Otto engine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configured base seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Caps the worker count. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Leave the coherence term out of the normal-mode populations.
    #[arg(long, global = true)]
    no_correlation: bool,

    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    dump_defaults: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Anti-crossing noise-spectrum map and normal-mode splitting.
    Spectrum,
    /// Single-cylinder ensemble, normal-mode series and cycle thermodynamics.
    Cycle,
    /// Straight-twin ensemble with per-branch thermodynamics.
    Twin,
    /// Normalized efficiency against sweep time.
    Sweep,
    /// Sweep time maximizing the normalized efficiency.
    Optimize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.dump_defaults {
        // A closed pipe (`| head`) is not an error here.
        let _ = writeln!(std::io::stdout(), "{}", RunConfig::default().to_json());
        return Ok(());
    }
    let command = cli.command.ok_or_else(|| CliError::Config("no subcommand given (see --help)".into()))?;
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if cli.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    config.validate()?;
    let exec = match cli.workers {
        Some(n) => Exec::with_workers(n),
        None => Exec::default(),
    };
    let accounting = if cli.no_correlation { Accounting::NoCorrelation } else { Accounting::Full };
    let ctx = commands::Context { config, exec, accounting };
    let outputs = match command {
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::Cycle => commands::cycle(&ctx)?,
        Command::Twin => commands::twin(&ctx)?,
        Command::Sweep => commands::sweep(&ctx)?,
        Command::Optimize => commands::optimize(&ctx)?,
    };
    let mut outputs = outputs;
    outputs.add("config.json", format!("{}\n", ctx.config.to_json()).into_bytes());
    let names: Vec<String> = outputs.names().map(|p| p.display().to_string()).collect();
    outputs.commit(&ctx.config.out_dir)?;
    println!("wrote {} to {}", names.join(", "), ctx.config.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
