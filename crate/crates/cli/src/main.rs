//! `laguerre`: generate Poisson-Laguerre tessellations, run verification
//! batteries and cut planar tessellations with random lines.
//!
//! Exit codes: 0 on success (a battery that reports a failing model still
//! succeeds), 1 on usage or configuration errors, 2 on numerical failures.

mod commands;
mod settings;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use settings::{Flags, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] laguerre_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use laguerre_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(
                E::InvalidOrder(_)
                | E::InvalidModel(_)
                | E::NotApplicable(_)
                | E::InvalidWindow(_)
                | E::Unsupported(_)
                | E::Config(_)
                | E::Json(_)
                | E::Io(_),
            ) => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "laguerre", version, about = "Poisson-Laguerre tessellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a tessellation and write dumps plus an SVG rendering (d = 2).
    Generate,
    /// Run a verification battery and write its reports.
    Verify,
    /// Cut a planar tessellation with a random line and simulate the matching
    /// one-dimensional tessellation.
    Section,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", settings.jobs)))?;
    pool.install(|| match cli.command {
        Command::Generate => commands::generate(&settings),
        Command::Verify => commands::verify(&settings).map(|_| ()),
        Command::Section => commands::section(&settings),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
