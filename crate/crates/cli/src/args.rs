use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "drmpc", version, about = "Deadbeat robust MPC: synthesis, simulation and region-of-attraction studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the deadbeat plan (and optionally terminal ingredients).
    Precompute(PrecomputeArgs),
    /// Solve one receding-horizon problem at a given state.
    Solve(SolveArgs),
    /// Run a closed loop and report feasibility and Lyapunov decrease.
    Simulate(SimulateArgs),
    /// Scan the region of attraction on a grid.
    Roa(RoaArgs),
    /// Sweep sample times and horizons and write the excess-volume tables.
    Compare(CompareArgs),
    /// Run the invariant suites against a config.
    Check(CheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Precompute(_) => "precompute",
            Command::Solve(_) => "solve",
            Command::Simulate(_) => "simulate",
            Command::Roa(_) => "roa",
            Command::Compare(_) => "compare",
            Command::Check(_) => "check",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Problem config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads for grid scans and Monte-Carlo batches (default: logical cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    DrmpcOnline,
    DrmpcOffline,
    Nominal,
    Tube,
    Adf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalChoice {
    Origin,
    PiSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanChoice {
    Points,
    Rows,
}

#[derive(Debug, Args, Serialize)]
pub struct ControllerArgs {
    #[arg(long, value_enum, default_value_t = ControllerKind::DrmpcOnline)]
    pub controller: ControllerKind,
    /// Terminal condition of the DRMPC and nominal controllers.
    #[arg(long, value_enum, default_value_t = TerminalChoice::Origin)]
    pub terminal: TerminalChoice,
}

#[derive(Debug, Args, Serialize)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the terminal ingredients for this terminal kind.
    #[arg(long, value_enum)]
    pub terminal: Option<TerminalChoice>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub controller: ControllerArgs,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Write the QP as JSON next to the decision.
    #[arg(long)]
    pub dump_qp: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub controller: ControllerArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    /// zero, uniform, vertex or vanish:T0
    #[arg(long, default_value = "uniform")]
    pub policy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct RoaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub controller: ControllerArgs,
    /// Grid resolution such as 101x41 (default: step 0.1 over X in 2-D).
    #[arg(long)]
    pub resolution: Option<String>,
    /// Per-point phase-1 LPs, or one interval LP pair per grid line.
    #[arg(long, value_enum, default_value_t = ScanChoice::Points)]
    pub scan: ScanChoice,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of I, II, III.
    #[arg(long, default_value = "I,II,III")]
    pub tables: String,
    #[arg(long, default_value = "0.10,0.15,0.25,0.40")]
    pub ts_list: String,
    #[arg(long, default_value = "10,20,30,40,50")]
    pub horizons: String,
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long, value_enum, default_value_t = ScanChoice::Rows)]
    pub scan: ScanChoice,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory for check.json and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
