//! `minimax-lq`: batch front end for Wasserstein-penalized minimax LQ
//! control.
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 a solver precondition does
//! not hold, 3 numerical failure, 64 usage or malformed input, 74 I/O
//! failure.

mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(minimax_lq::Error),
    Io(String),
    ReplayMismatch(Vec<String>),
}

impl From<minimax_lq::Error> for CliError {
    fn from(e: minimax_lq::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use minimax_lq::Error as E;
        match self {
            CliError::Usage(_) => 64,
            CliError::Io(_) => 74,
            CliError::ReplayMismatch(_) => 1,
            CliError::Core(e) if e.is_assumption_violation() => 2,
            CliError::Core(
                E::DimensionMismatch(_)
                | E::InvalidParameter(_)
                | E::InvalidRisk(_)
                | E::BadDataFile(_)
                | E::SingularInertia { .. },
            ) => 64,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::ReplayMismatch(files) => write!(f, "replay produced different bytes for: {}", files.join(", ")),
        }
    }
}

/// Flags shared by every pipeline subcommand. The manifest stores them
/// verbatim so a run can be replayed.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunArgs {
    /// Scenario file (TOML, see docs/scenario.md).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo runs or reliability trials.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Ambiguity radius; `tune` and `reliability` accept a comma list.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    /// Risk level.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fixed Wasserstein penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Finite horizon, overriding the scenario.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Disturbance model for `simulate`: worst_case, empirical, truth or hinf.
    #[arg(long)]
    pub disturbance: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveFinite,
    SolveInfinite,
    Tune,
    Radius,
    Simulate,
    Reliability,
    GridDemo,
}

#[derive(Subcommand, Debug)]
enum Top {
    #[command(flatten)]
    Run(RunCommand),
    /// Re-run a manifest and compare output bytes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum RunCommand {
    /// Finite-horizon Riccati recursion.
    SolveFinite(RunArgs),
    /// Steady-state solution by both ARE routes.
    SolveInfinite(RunArgs),
    /// Penalty tuning for one or more radii.
    Tune(RunArgs),
    /// Ambiguity radius table over sample counts.
    Radius(RunArgs),
    /// Monte-Carlo cost estimates and trajectory bands.
    Simulate(RunArgs),
    /// Out-of-sample reliability sweep over radii.
    Reliability(RunArgs),
    /// Minimax against LQG frequency regulation on a power network.
    GridDemo(RunArgs),
}

impl RunCommand {
    fn split(self) -> (Command, RunArgs) {
        match self {
            RunCommand::SolveFinite(a) => (Command::SolveFinite, a),
            RunCommand::SolveInfinite(a) => (Command::SolveInfinite, a),
            RunCommand::Tune(a) => (Command::Tune, a),
            RunCommand::Radius(a) => (Command::Radius, a),
            RunCommand::Simulate(a) => (Command::Simulate, a),
            RunCommand::Reliability(a) => (Command::Reliability, a),
            RunCommand::GridDemo(a) => (Command::GridDemo, a),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "minimax-lq", version, about = "Wasserstein-penalized minimax LQ control")]
struct Cli {
    #[command(subcommand)]
    command: Top,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Top::Run(cmd) => {
            let (command, args) = cmd.split();
            output::run_and_write(command, &args).map(|dir| {
                eprintln!("wrote {}", dir.display());
            })
        }
        Top::Replay { manifest, out } => output::replay(&manifest, out.as_deref()).map(|n| {
            eprintln!("replay: {n} output file(s) byte-identical");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
