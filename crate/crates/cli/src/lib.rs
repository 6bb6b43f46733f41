//! Command-line runner: loads signals and tariffs, solves, sweeps and writes
//! plot-ready CSV or JSON.
//!
//! Option values come from flags, then from the JSON file given by
//! `--config`, then from built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, Parser};
use thiserror::Error;

use flexbound::analysis::AnalysisError;
use flexbound::flexmodel::ModelError;
use flexbound::signals::SignalError;
use flexbound::solver::SolveError;
use flexbound::tariff::TariffError;

pub mod args;
mod commands;
mod config;
mod inputs;
mod report;

pub use args::{Cli, Command};

/// Process exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// Malformed flags, config or input files.
pub const EXIT_INPUT: u8 = 1;
/// The envelope admits no feasible schedule.
pub const EXIT_INFEASIBLE: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Signal {
        path: PathBuf,
        #[source]
        source: SignalError,
    },
    #[error("{path}: {source}")]
    Tariff {
        path: PathBuf,
        #[source]
        source: TariffError,
    },
    #[error("{path}: {source}")]
    Schedule {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Billing(#[from] TariffError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

fn solve_infeasible(err: &SolveError) -> bool {
    matches!(
        err,
        SolveError::Infeasible(_) | SolveError::EcCapExceeded { .. }
    )
}

fn analysis_infeasible(err: &AnalysisError) -> bool {
    match err {
        AnalysisError::Solve(e) | AnalysisError::AtWeight { source: e, .. } => solve_infeasible(e),
        AnalysisError::AtGridPoint { source, .. } => analysis_infeasible(source),
        _ => false,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let infeasible = match self {
            CliError::Solve(e) => solve_infeasible(e),
            CliError::Analysis(e) => analysis_infeasible(e),
            _ => false,
        };
        if infeasible {
            EXIT_INFEASIBLE
        } else {
            EXIT_INPUT
        }
    }
}

/// Parses `argv` (program name first), merges the config file and runs the
/// subcommand. Summaries go to `stdout`, diagnostics to `stderr`; the
/// return value is the process exit status.
pub fn run_from_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err((code, text)) => {
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match commands::run(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            // messages already embed their causes
            let _ = writeln!(stderr, "error: {err}");
            err.exit_code()
        }
    }
}

/// Help and version requests exit 0; every other clap error is an input
/// error.
fn clap_exit(err: clap::Error, note: Option<&str>) -> (u8, String) {
    let mut text = err.render().to_string();
    if !err.use_stderr() {
        return (EXIT_OK, text);
    }
    if let Some(note) = note {
        text.push_str(note);
    }
    (EXIT_INPUT, text)
}

fn parse(argv: &[OsString]) -> Result<Cli, (u8, String)> {
    let first = Cli::try_parse_from(argv).map_err(|e| clap_exit(e, None))?;
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let merged = config::merge_config(&Cli::command(), argv, &path)
        .map_err(|e| (EXIT_INPUT, format!("error: {e}\n")))?;
    let note = format!("(options merged from config {})\n", path.display());
    Cli::try_parse_from(merged).map_err(|e| clap_exit(e, Some(&note)))
}
