//! `multihop-topo` command line.
//!
//! Exit codes: 0 success, 2 input or usage error, 3 verification failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multihop_topo::graph::{DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_BETA_STEP};
use multihop_topo::radio::DEFAULT_GUARD;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "multihop-topo",
    version,
    about = "Multi-hop topology synthesis for dense wireless testbeds"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct GlobalOpts {
    /// Smallest link budget of the sweep, dB.
    #[arg(long, global = true, default_value_t = DEFAULT_BETA_MIN)]
    pub beta_min: f64,
    /// Largest link budget of the sweep, dB.
    #[arg(long, global = true, default_value_t = DEFAULT_BETA_MAX)]
    pub beta_max: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_BETA_STEP)]
    pub beta_step: f64,
    /// Fluctuation margin for tree construction, dB.
    #[arg(long, global = true, default_value_t = 15.0)]
    pub margin: f64,
    /// Per-level breadth: const:K, linear, or table:1=A,2=B,...
    #[arg(long, global = true, default_value = "linear")]
    pub kappa: String,
    /// Extra budget applied to radio settings, dB.
    #[arg(long, global = true, default_value_t = DEFAULT_GUARD)]
    pub guard: i32,
    /// Transceiver profile file (JSON); the AT86RF231 placeholder grid by default.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Overrides the scenario seed for `synth`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Aggregate campaign logs into a loss matrix.
    Ingest {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// mean, median or pNN.
        #[arg(long, default_value = "mean")]
        aggregator: String,
        /// Warn about directed links with fewer samples.
        #[arg(long, default_value_t = 250)]
        min_count: u32,
    },
    /// Degree distribution, edge monotonicity and distance correlation.
    Analyze {
        matrix: PathBuf,
        #[arg(long)]
        positions: Option<PathBuf>,
        /// Report the distance/loss correlation (needs --positions).
        #[arg(long)]
        correlation: bool,
    },
    /// Constant-degree induced subgraphs over the budget sweep.
    Degree {
        matrix: PathBuf,
        /// Target degree.
        #[arg(long, short)]
        c: usize,
        #[arg(long)]
        positions: Option<PathBuf>,
    },
    /// Layered trees over all roots and budgets.
    Tree {
        matrix: PathBuf,
        /// Minimize the node count of each reported tree.
        #[arg(long)]
        reduce: bool,
        /// Only grow trees from this root.
        #[arg(long)]
        root: Option<u32>,
        /// Only use this budget instead of the sweep.
        #[arg(long)]
        beta: Option<f64>,
        /// Number of trees to keep in the output.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Transmit power / sensitivity pairs for a budget.
    Settings {
        #[arg(long, allow_hyphen_values = true)]
        beta: i32,
    },
    /// Re-check a stored topology against a fresh matrix.
    Verify {
        topology: PathBuf,
        fresh: PathBuf,
        /// Which tree of a tree file to check.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Maximum tree depth and its budget range per testbed.
    SweepReport {
        #[arg(required = true)]
        matrices: Vec<PathBuf>,
    },
    /// Generate a synthetic loss matrix from a scenario file.
    Synth { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
