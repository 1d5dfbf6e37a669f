use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod inputs;

/// OVSF weight compression, weights-generator simulation and accelerator
/// design-space exploration.
#[derive(Debug, Parser)]
#[command(name = "ovsfgen", version)]
struct Cli {
    /// Directory searched for `<name>.toml` when a model, platform or
    /// schedule is neither a file nor a builtin preset.
    #[arg(long, global = true, env = "OVSFGEN_CONFIG_DIR")]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded random weights for every layer of a model.
    GenWeights(GenWeightsArgs),
    /// Fit weights onto the OVSF basis and truncate per the schedule.
    Compress(CompressArgs),
    /// Run the weights generator and engine on a compressed container and
    /// check them against their references.
    Simulate(SimulateArgs),
    /// Per-layer performance estimate for one design point.
    Estimate(EstimateArgs),
    /// Exhaustive search for the fastest feasible design point.
    Dse(DseArgs),
    /// Baseline-versus-compressed bandwidth sweep.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn enabled(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or markdown.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Seed recorded in report headers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct Target {
    /// Builtin model name or TOML path.
    #[arg(long)]
    pub model: String,
    /// Builtin schedule name or TOML path.
    #[arg(long, default_value = "baseline")]
    pub schedule: String,
    /// Builtin platform name or TOML path.
    #[arg(long, default_value = "z7045")]
    pub platform: String,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "ovsf50")]
    pub schedule: String,
    /// Raw weights container, one `<layer>.weight` tensor per layer.
    #[arg(long)]
    pub weights: PathBuf,
    /// Compressed container to write.
    #[arg(long)]
    pub container: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    /// Compressed container written by `compress`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Design point `M,T_R,T_P,T_C`.
    #[arg(long)]
    pub sigma: String,
    /// float or fixed16.
    #[arg(long, default_value = "float")]
    pub mode: String,
    /// Restrict to these layers.
    #[arg(long)]
    pub layer: Vec<String>,
    /// Spatial size of the random input used for the engine check.
    #[arg(long, default_value_t = 8)]
    pub input_hw: usize,
    /// Write per-tile cycle traces as CSV into this directory.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    #[command(flatten)]
    pub target: Target,
    /// Input bandwidth in GB/s, or a tier label (1x, 2x, 4x, 12x).
    #[arg(long)]
    pub bw: Option<String>,
    /// ovsf or baseline.
    #[arg(long, default_value = "ovsf")]
    pub variant: String,
    #[arg(long, value_enum, default_value = "on")]
    pub selective: OnOff,
    /// two-regime, stream or cache.
    #[arg(long, default_value = "two-regime")]
    pub weight_policy: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub perf: PerfArgs,
    #[arg(long)]
    pub sigma: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DseArgs {
    #[command(flatten)]
    pub perf: PerfArgs,
    /// Number of ranked points in the table.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// TOML file with `m`, `t_r`, `t_p`, `t_c` candidate lists.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub target: Target,
    /// Comma-separated bandwidths (GB/s or tier labels).
    #[arg(long, default_value = "1x,2x,4x,12x")]
    pub bw: String,
    #[arg(long, value_enum, default_value = "on")]
    pub selective: OnOff,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

/// Errors surfaced by the CLI, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] ovsfgen::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        use ovsfgen::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 1,
            CliError::Core(E::Numerical(_) | E::Overflow(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = inputs::Resolver::new(cli.config_dir);
    let res = match cli.command {
        Command::GenWeights(a) => commands::gen_weights(&ctx, a),
        Command::Compress(a) => commands::compress(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
        Command::Dse(a) => commands::dse(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
