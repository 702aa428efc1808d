use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use gogiskip_core::{MappingMode, Variant};

#[derive(Parser, Debug)]
#[command(name = "gogiskip", version, about = "Entropy-adaptive, gradient-guided compression of reasoning traces")]
pub struct Cli {
    /// Worker threads for batch commands (defaults to available cores).
    #[arg(long, global = true, env = "GOGISKIP_WORKERS")]
    pub workers: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress traces and write kept tokens plus diagnostics sidecars.
    Compress(CompressArgs),
    /// Derive a corpus retention target and write the updated config.
    Tune(TuneArgs),
    /// Retention, preservation, correlation and entropy reports.
    Stats(StatsArgs),
    /// Decision surface over an entropy grid and a score-quantile grid.
    Surface(SurfaceArgs),
    /// Per-layer gradient contribution profile.
    Layers(LayersArgs),
    /// Compare the full policy against its ablations and the static baseline.
    Ablate(AblateArgs),
    /// Generate a synthetic trace corpus.
    Synth(SynthArgs),
}

/// Engine parameters. Flags override the config file, which overrides defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub gamma_abs_min: Option<f64>,
    #[arg(long)]
    pub gamma_abs_max: Option<f64>,
    #[arg(long)]
    pub gamma_base: Option<f64>,
    #[arg(long)]
    pub gamma_target: Option<f64>,
    #[arg(long)]
    pub gamma_reference: Option<f64>,
    #[arg(long)]
    pub entropy_delta: Option<f64>,
    #[arg(long)]
    pub s_gamma: Option<f64>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub s_n: Option<f64>,
    #[arg(long)]
    pub theta_critical: Option<f64>,
    #[arg(long)]
    pub delta_high: Option<f64>,
    #[arg(long)]
    pub delta_low: Option<f64>,
    #[arg(long)]
    pub mapping_mode: Option<MappingMode>,
    /// Disable the extreme-low-score override.
    #[arg(long)]
    pub no_override: bool,
    /// Disable entropy-gradient refinement of the cap.
    #[arg(long)]
    pub no_gradient: bool,
    /// Treat whitespace-only tokens as ordinary reasoning tokens.
    #[arg(long)]
    pub keep_space_tokens: bool,
    /// Token ids excluded from pruning (repeatable).
    #[arg(long = "ignore-token-id")]
    pub ignored_token_ids: Vec<i64>,
    /// Global entropy median (needs --h-std).
    #[arg(long, requires = "h_std")]
    pub h_median: Option<f64>,
    /// Global entropy standard deviation (needs --h-median).
    #[arg(long, requires = "h_median")]
    pub h_std: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Trace file, directory of *.jsonl files, or glob pattern.
    #[arg(long = "in")]
    pub input: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "full")]
    pub variant: Variant,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long = "in")]
    pub input: String,
    /// Where to write the tuned config (.json or TOML).
    #[arg(long)]
    pub out_config: PathBuf,
    /// Optional JSON dump of the extracted corpus features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: String,
    /// Directory holding `<stem>.diag.json` sidecars from `compress`.
    /// Masks are recomputed with the full policy when omitted.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Args, Debug)]
pub struct SurfaceArgs {
    /// Entropy grid: `start:stop:count` or a comma-separated list.
    #[arg(long, default_value = "0:4:41")]
    pub h_grid: String,
    /// Score-quantile grid in [0, 1].
    #[arg(long, default_value = "0:1:101")]
    pub q_grid: String,
    /// CSV output; a JSON copy is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Args, Debug)]
pub struct LayersArgs {
    #[arg(long = "in")]
    pub input: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long = "in")]
    pub input: String,
    /// Output directory for ablation.csv and ablation.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of traces.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Mean trace length; lengths vary uniformly within +-50%.
    #[arg(long, default_value_t = 400)]
    pub len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Layers of synthetic per-layer gradient norms (0 for none).
    #[arg(long, default_value_t = 0)]
    pub layers: usize,
}
