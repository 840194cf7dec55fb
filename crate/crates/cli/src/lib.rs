//! Command-line front end: constants tables, spectral curves, graph dumps,
//! simulations, parameter sweeps and modulation estimates.
//!
//! Every command writes exactly one [`RunManifest`]: to `--manifest` if
//! given, else to `<out-dir>/manifest.json`, else to standard error.
//! Numbers in CSV output use the shortest decimal form that parses back to
//! the same `f64`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
mod error;
pub mod manifest;

pub use error::{CliError, CliResult};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "twisted", version, about = "Twisted states of the Kuramoto model on nearest-neighbour graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normal-form constants per winding number, plus the ζ constants.
    Constants(ConstantsArgs),
    /// χ₁, χ₂ curves over κ, or the eigenvalues at one κ.
    Spectrum(SpectrumArgs),
    /// The lagged cubic coefficient β_σ over σ and the resulting branch.
    Betasigma(BetaSigmaArgs),
    /// Realise a coupling matrix and dump it.
    Graph(GraphArgs),
    /// Integrate one configuration.
    Simulate(SimulateArgs),
    /// Run one configuration over a list of values of a parameter.
    Sweep(SweepArgs),
    /// First-mode modulation estimate from a trajectory CSV.
    Estimate(EstimateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Directory for CSV/JSON outputs; tables go to stdout when omitted.
    #[arg(long, short = 'o')]
    pub out_dir: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// Winding numbers (1..=8).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub q: Vec<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Phase lag used for β_σ, ν_j and Ω in the JSON dump.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub sigma: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub q: u32,
    #[arg(long, default_value_t = 6)]
    pub ell_max: u32,
    #[arg(long, default_value_t = 0.001)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 0.499)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 499)]
    pub kappa_steps: usize,
    /// Explicit κ values instead of the uniform grid.
    #[arg(long, value_delimiter = ',')]
    pub kappa: Vec<f64>,
    /// Dump the eigenvalues at this κ instead of the curves.
    #[arg(long)]
    pub at_kappa: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct BetaSigmaArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub q: Vec<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Grid points on [−π/2, π/2]; the endpoints are dropped.
    #[arg(long, default_value_t = 181)]
    pub steps: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct GraphFlags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// deterministic_dense | random_dense | random_sparse
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub graph_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// JSON graph spec (or a manifest of an earlier `graph` run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphFlags,
    /// pixel (k,j,w CSV), binary (adjacency file) or both.
    #[arg(long, default_value = "pixel")]
    pub format: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct SimFlags {
    #[command(flatten)]
    pub graph: GraphFlags,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// A number, or `auto` for the value that stops the continuum rotation.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    #[arg(long)]
    pub perturbation: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub modulation: Option<f64>,
    /// Seed of the initial perturbation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rotating_frame: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
    /// auto | naive | banded | sparse
    #[arg(long)]
    pub rhs: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation config (or a manifest of an earlier run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Deviation (rad) counted as escape in the printed summary.
    #[arg(long, default_value_t = 0.5)]
    pub escape_threshold: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimFlags,
    /// kappa, sigma, p, gamma, q, n, seed, graph_seed, omega, t_end,
    /// perturbation_amplitude or initial_modulation.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub values: Vec<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 0.5)]
    pub escape_threshold: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Trajectory CSV written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Winding number; defaults to the one recorded in the file.
    #[arg(long)]
    pub q: Option<u32>,
    /// Window for the rate and residual summaries.
    #[arg(long)]
    pub t_from: Option<f64>,
    #[arg(long)]
    pub t_to: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<RunManifest> {
    match cli.command {
        Command::Constants(a) => commands::constants(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Betasigma(a) => commands::betasigma(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Estimate(a) => commands::estimate(&a),
    }
}
