//! `survscore`: score-process diagnostics, R²-guided effect selection and
//! simulation studies for survival regression with time-varying effects.

mod diagnose;
mod fit;
mod output;
mod reproduce;
mod simulate;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use survscore::Error;

#[derive(Parser)]
#[command(name = "survscore", version, about, long_about = None)]
/// Goodness-of-fit diagnostics and R² model selection for survival data
/// with time-varying regression effects.
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standardized score process with per-covariate confidence bands.
    Diagnose(diagnose::DiagnoseArgs),
    /// Fit candidate temporal effects and rank them by R².
    Fit(fit::FitArgs),
    /// Seeded replication study of a simulation scenario.
    Simulate(simulate::SimulateArgs),
    /// Regenerate the data behind the simulation tables and figures.
    Reproduce(reproduce::ReproduceArgs),
}

/// Exit status plus the message printed on standard error.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const USAGE: u8 = 2;
pub const DEGENERATE: u8 = 3;
pub const ANALYSIS: u8 = 4;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NoInformativeFailures | Error::DegenerateRiskSet { .. } | Error::SingularMatrix => DEGENERATE,
            Error::NonConvergence { .. }
            | Error::MonotoneLikelihood { .. }
            | Error::SingularInformation
            | Error::ZeroDenominator
            | Error::DegenerateSegment(_)
            | Error::AllCandidatesFailed(_) => ANALYSIS,
            _ => USAGE,
        };
        let mut message = e.to_string();
        if let Error::AllCandidatesFailed(failures) = &e {
            for (name, reason) in failures {
                message.push_str(&format!("\n  {name}: {reason}"));
            }
        }
        CliError { code, message }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Diagnose(a) => diagnose::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Reproduce(a) => reproduce::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("survscore: {e}");
            ExitCode::from(e.code)
        }
    }
}
