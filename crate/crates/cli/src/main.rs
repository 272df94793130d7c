//! `penfair`: simulate penalty protocols, compute their costs and
//! efficiency, regenerate plot data, and run the escrow demos.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use penfair_core::cml::CmlError;
use penfair_core::escrow::EscrowError;

#[derive(Debug, Parser)]
#[command(name = "penfair", version, about = "Penalty-protocol schedules, fairness and efficiency")]
pub struct Cli {
    /// JSON file with default values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ProtocolArgs {
    /// Protocol name or abbreviation (ladder, ml, cl, cml, impc, ll, pl, cpl, al).
    #[arg(long)]
    pub protocol: Option<String>,
    /// Number of parties.
    #[arg(long)]
    pub n: Option<usize>,
    /// Stages of a reactive computation.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Penalty unit in coins.
    #[arg(long)]
    pub q: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RateArgs {
    /// Annual interest rate in basis points.
    #[arg(long = "bps")]
    pub rate_bps: Option<f64>,
    /// Wall-clock minutes per protocol round.
    #[arg(long = "minutes-per-round")]
    pub minutes_per_round: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit the cash-flow schedule of one run.
    Simulate {
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Batched executions of the amortized ladder.
        #[arg(long)]
        executions: Option<usize>,
        /// `party@round`, or `party@deposit|claim|lock|redeem`.
        #[arg(long)]
        abort: Option<String>,
    },
    /// Net present costs and the financial-fairness verdict, as JSON.
    Fairness {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        rate: RateArgs,
        /// Points of the per-minute rate grid the verdict is checked over.
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        /// Smallest per-minute rate of the grid.
        #[arg(long, default_value_t = 1e-9)]
        grid_lo: f64,
        /// Largest per-minute rate of the grid.
        #[arg(long, default_value_t = 1e-3)]
        grid_hi: f64,
        /// Relative tolerance for equal costs.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Transactions, rounds, script size, fees and duration.
    Efficiency {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        rate: RateArgs,
    },
    /// Write the plot data files.
    Figures {
        /// Directory receiving fig5 … fig10.
        #[arg(long, default_value = "figures")]
        out_dir: PathBuf,
        /// Only this figure (fig5, fig6, fig7, fig8, fig9, fig10).
        #[arg(long)]
        only: Option<String>,
        #[command(flatten)]
        rate: RateArgs,
    },
    /// Convert an annual rate to continuous per-unit rates.
    Rates {
        #[command(flatten)]
        rate: RateArgs,
    },
    /// Run the compact multi-lock protocol against an adversary.
    CmlDemo {
        #[arg(long)]
        parties: Option<usize>,
        #[arg(long = "penalty-q")]
        penalty_q: Option<u64>,
        #[arg(long, default_value_t = 5)]
        timeout: u64,
        /// none | lock-abort[:i,…] | redeem-abort:i,… | wrong-witness:i,…
        #[arg(long, default_value = "none")]
        adversary: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the multi-lock realization in script form.
    BtcDemo {
        #[arg(long)]
        parties: Option<usize>,
        #[arg(long = "penalty-q")]
        penalty_q: Option<u64>,
        #[arg(long = "timeout-height", default_value_t = 150)]
        timeout_height: u64,
        /// honest | abort:<idx> | malleate
        #[arg(long, default_value = "honest")]
        scenario: String,
    },
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(anyhow::Error),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Domain(e) => write!(f, "{e:#}"),
            Failure::Invariant(m) => write!(f, "invariant violation: {m}"),
        }
    }
}

fn is_invariant(e: &anyhow::Error) -> Option<String> {
    e.chain().find_map(|c| match c.downcast_ref::<EscrowError>() {
        Some(EscrowError::InvariantViolation(m)) => Some(m.clone()),
        _ => match c.downcast_ref::<CmlError>() {
            Some(CmlError::Escrow(EscrowError::InvariantViolation(m))) => Some(m.clone()),
            _ => None,
        },
    })
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match is_invariant(&e) {
            Some(m) => Failure::Invariant(m),
            None => Failure::Domain(e),
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::from(anyhow::Error::from(e))
            }
        })*
    };
}

domain_errors!(
    std::io::Error,
    serde_json::Error,
    penfair_core::schedule::ScheduleError,
    penfair_core::fairness::FairnessError,
    penfair_core::efficiency::EfficiencyError,
    penfair_core::btcscript::BtcError,
    EscrowError,
    CmlError,
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("penfair: {f}");
            ExitCode::from(f.code())
        }
    }
}
