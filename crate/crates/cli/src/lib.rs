//! Command-line front end for the repurchasing contract solver.
//!
//! Exit codes: 0 success or feasible contract, 1 infeasible contract,
//! 2 invalid input, 3 solver failure.

pub mod commands;
pub mod io;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use repurchase_core::simulation::TieBreak;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<repurchase_core::Error> for CliError {
    fn from(e: repurchase_core::Error) -> Self {
        let code = match e {
            repurchase_core::Error::Solver(_) => EXIT_SOLVER,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "repurchase", version, about = "Optimal contracts for repurchasing idle computing resources")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodFlag {
    /// Single-capacity program when there is one capacity, reduced search otherwise.
    Auto,
    Single,
    Reduced,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieFlag {
    TruthfulFirst,
    MaxPayment,
}

impl From<TieFlag> for TieBreak {
    fn from(t: TieFlag) -> Self {
        match t {
            TieFlag::TruthfulFirst => TieBreak::TruthfulFirst,
            TieFlag::MaxPayment => TieBreak::MaxPayment,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute an optimal contract menu for an instance.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodFlag,
        /// Complementarity relaxation for `--method relaxed` (default: the
        /// instance's `epsilon`, else 1e-6).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        /// Seed for relaxed restarts (default: the instance's `seed`, else 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Audit tolerance.
        #[arg(long, default_value_t = repurchase_core::feasibility::AUDIT_TOL)]
        tol: f64,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a contract against the feasibility conditions.
    Verify {
        instance: PathBuf,
        /// Contract file or solve report.
        contract: PathBuf,
        #[arg(long, default_value_t = repurchase_core::feasibility::AUDIT_TOL)]
        tol: f64,
        /// Relaxation used for the reported regret bound (default: the
        /// report's own, else 0).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the provider's utility under best responses.
    Simulate {
        instance: PathBuf,
        contract: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        replications: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "truthful-first")]
        tie_break: TieFlag,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regret of a contract and the bound for a relaxation level.
    Regret {
        instance: PathBuf,
        contract: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force search over an allocation lattice.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
        #[arg(long, default_value_t = repurchase_core::feasibility::AUDIT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Result of a command: text for stdout and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Solve {
            instance,
            method,
            epsilon,
            restarts,
            seed,
            tol,
            out,
        } => commands::solve(&commands::SolveArgs {
            instance,
            method,
            epsilon,
            restarts,
            seed,
            tol,
            out,
        }),
        Command::Verify {
            instance,
            contract,
            tol,
            epsilon,
            out,
        } => commands::verify(&instance, &contract, tol, epsilon, out.as_deref()),
        Command::Simulate {
            instance,
            contract,
            replications,
            seed,
            tie_break,
            out,
        } => commands::simulate(&instance, &contract, replications, seed, tie_break.into(), out.as_deref()),
        Command::Regret {
            instance,
            contract,
            epsilon,
            out,
        } => commands::regret(&instance, &contract, epsilon, out.as_deref()),
        Command::Oracle {
            instance,
            grid_step,
            tol,
            out,
        } => commands::oracle(&instance, grid_step, tol, out.as_deref()),
    }
}
