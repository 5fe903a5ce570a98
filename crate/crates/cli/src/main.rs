//! `workmin` command-line driver.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;
use workmin::bath::BathError;
use workmin::brownian::BrownianError;
use workmin::dynamics::DynamicsError;
use workmin::optimize::{AnsatzKind, OptimizeError};
use workmin::protocol::ProtocolError;
use workmin::system::SystemError;
use workmin::thermo::ThermoError;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("optimizer did not converge: {0}")]
    NotConverged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<BathError> for CliError {
    fn from(e: BathError) -> Self {
        match e {
            BathError::InvalidParameter(_) | BathError::NonIntegrableSpectrum(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::InvalidAnsatz(_) | ProtocolError::GridMismatch(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::System(e) => e.into(),
            DynamicsError::Protocol(e) => e.into(),
            DynamicsError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ThermoError> for CliError {
    fn from(e: ThermoError) -> Self {
        match e {
            ThermoError::Dynamics(e) => e.into(),
            ThermoError::Protocol(e) => e.into(),
            ThermoError::Cache(m) => CliError::Io(m),
            ThermoError::OddIntervals(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::InvalidConfig(_) => CliError::Config(e.to_string()),
            OptimizeError::Protocol(e) => e.into(),
            OptimizeError::Thermo(e) => e.into(),
            OptimizeError::Dynamics(e) => e.into(),
            OptimizeError::Bath(e) => e.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<BrownianError> for CliError {
    fn from(e: BrownianError) -> Self {
        match e {
            BrownianError::InvalidParameter(_) => CliError::Config(e.to_string()),
            BrownianError::Protocol(e) => e.into(),
            BrownianError::Bath(e) => e.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "workmin", version, about = "Work-minimizing protocols for open two-level systems and the Brownian trap")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Seed for randomized restarts (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// RK4 step (overrides `solver.dt`).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Hierarchy depth (overrides `solver.depth`).
    #[arg(long, global = true)]
    pub depth: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate the configured protocol and report its work.
    Simulate,
    /// Optimize one ansatz at the configured duration.
    Optimize {
        /// Ansatz: linear, imp3, poly3 or brute_force (default from `protocol.kind`).
        #[arg(long)]
        ansatz: Option<AnsatzKind>,
    },
    /// Optimize every ansatz over the configured parameter grid.
    Sweep,
    /// Free-energy difference of the configured system.
    Deltaf,
    /// Moving-trap calculations.
    Brownian {
        #[arg(long, value_enum, default_value_t = TrapMode::Qp)]
        mode: TrapMode,
    },
    /// Report the exponential fit of the configured bath.
    ValidateBath,
    /// Regenerate a reduced version of a reference data set.
    Repro {
        #[arg(value_enum)]
        target: ReproTarget,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrapMode {
    /// Closed-form Markovian optimum (Ohmic or overdamped).
    Analytic,
    /// Globally optimal discretized protocol.
    Qp,
    /// Best line-plus-impulse protocol.
    Imp3,
    /// Time-domain work of the linear protocol.
    Work,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReproTarget {
    /// Excess work of the ansaetze for the driven system.
    Fig3,
    /// Optimal protocols of the tunable system.
    Fig4,
    /// Solver comparison for the driven system.
    Fig5,
    /// Gap between the impulse ansatz and the global trap optimum.
    Trap,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
