//! `cislune`: plan, simulate and validate impulsive maneuvers about
//! cislunar chief orbits.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | internal error |
//! | 2 | bad command line |
//! | 3 | invalid scenario, constants, catalog or plan file |
//! | 4 | solver failure (cone program, refinement, unreachable target) |
//! | 5 | simulation failure (integration, singular or degenerate geometry) |
//! | 6 | I/O failure writing or reading files |

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_SIMULATION: u8 = 5;
pub const EXIT_IO: u8 = 6;

/// Environment variable naming the default constants file.
pub const CONSTANTS_ENV: &str = "CISLUNE_CONSTANTS";

#[derive(Debug, Parser)]
#[command(name = "cislune", version, about = "Optimal impulsive relative-motion planning in the CR3BP")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Random seed (Monte Carlo and MPC).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Number of Monte Carlo trials.
    #[arg(long, global = true)]
    pub trials: Option<usize>,

    /// STM strategy replacing the scenario's: `matrix-exponential[:minutes]`,
    /// `numerical-integration[:tol]`, `hcw` or `ya`.
    #[arg(long, global = true)]
    pub strategy: Option<String>,

    /// Constants file (mu, du_km, tu_s). Overrides the scenario's own
    /// `[constants]`; `CISLUNE_CONSTANTS` only supplies a default.
    #[arg(long, global = true)]
    pub constants: Option<PathBuf>,

    /// Worker threads for campaigns (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal plan and fly it in the ground truth.
    Plan {
        /// Scenario file or bundled scenario name.
        scenario: String,
    },
    /// Fly a plan in the ground truth (planning first when no plan is given).
    Simulate {
        scenario: String,
        /// Plan CSV as written by `plan`.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Uncontrolled STM propagation error against the ground truth.
    Errors {
        scenario: String,
        /// Comma-separated strategies to compare.
        #[arg(long, value_delimiter = ',')]
        series: Option<Vec<String>>,
    },
    /// Seeded campaign over random reconfigurations (needs --seed and --trials).
    Montecarlo {
        /// Scenario whose solver, truth and `[montecarlo]` settings are used.
        scenario: Option<String>,
        /// Also write the runtime statistics, which vary between runs.
        #[arg(long)]
        timing: bool,
    },
    /// Receding-horizon re-planning against a paired open-loop run.
    Mpc {
        scenario: String,
        /// Number of re-planning segments.
        #[arg(long)]
        segments: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cislune: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
