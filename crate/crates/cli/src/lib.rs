//! `xmold` command-line pipeline: design generation, simulation, model
//! training, explanation, cause evaluation, reporting and one-shot
//! reproduction. Every artifact echoes the command and arguments that made it.

pub mod artifact;
pub mod commands;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifact::Ctx;
use crate::commands::{calibrate, cause, doe, explain, report, reproduce, simulate, train};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "xmold",
    version,
    about = "Root-cause attribution for injection moulding quality"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design of experiments.
    #[command(subcommand)]
    Doe(doe::DoeCommand),
    /// Simulate quality responses for a design.
    Simulate(simulate::SimulateArgs),
    /// Train a forest or network on one response.
    Train(train::TrainArgs),
    /// Attribute predictions to factors.
    Explain(explain::ExplainArgs),
    /// Repeated controlled perturbation experiments.
    EvaluateCause(cause::CauseArgs),
    /// Merge attributions and cause reports into one tidy CSV.
    Report(report::ReportArgs),
    /// Run the whole pipeline into one directory.
    Reproduce(reproduce::ReproduceArgs),
    /// Fit surrogate parameters to the target effect sizes.
    Calibrate(calibrate::CalibrateArgs),
}

pub fn dispatch(command: &Command, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::Doe(doe::DoeCommand::Generate(a)) => doe::generate(a, ctx),
        Command::Simulate(a) => simulate::exec(a, ctx),
        Command::Train(a) => train::exec(a, ctx),
        Command::Explain(a) => explain::exec(a, ctx),
        Command::EvaluateCause(a) => cause::exec(a, ctx),
        Command::Report(a) => report::exec(a, ctx),
        Command::Reproduce(a) => reproduce::exec(a, ctx),
        Command::Calibrate(a) => calibrate::exec(a, ctx),
    }
}

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var("XMOLD_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "XMOLD_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn execute(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let ctx = Ctx::default();
    match thread_count()? {
        None => dispatch(&cli.command, &ctx),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?
            .install(|| dispatch(&cli.command, &ctx)),
    }
}

/// Run the CLI on `argv` (program name first) and return the exit code.
/// Errors go to stderr as one JSON line; written paths go to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
            }
            let err = CliError::Usage(e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or_default());
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
