use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "embgeo", version, about = "Anisotropy and intrinsic-dimension profiles of layer embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dump of known geometry.
    Synth(SynthArgs),
    /// Per-layer profile of one dump.
    Analyze(AnalyzeArgs),
    /// Cross-layer means over several checkpoints of one model.
    Series(SeriesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Layer geometry, repeatable (one layer each): uniform-hypercube:D,
    /// gaussian-diag:V1,V2,.., line-rank1, swiss-roll.
    #[arg(long = "layer", alias = "kind", required = true, value_name = "KIND")]
    pub layers: Vec<String>,
    /// Ambient (stored) dimension.
    #[arg(long, value_name = "N")]
    pub ambient: usize,
    /// Rows per layer.
    #[arg(long = "n", value_name = "N")]
    pub n_samples: usize,
    /// Base seed; layer i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint step recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    pub step: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    AnisotropySvd,
    AnisotropyCosine,
    IdTwonn,
    IdMada,
    IdMom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Svg,
}

impl FormatArg {
    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
            FormatArg::Svg => "svg",
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Subtract the mean embedding first (anisotropy metrics only).
    #[arg(long, overrides_with = "no_center")]
    pub center: bool,
    #[arg(long, overrides_with = "center")]
    pub no_center: bool,
    /// Minimum rows per batch.
    #[arg(long, default_value_t = embgeo::pipeline::DEFAULT_BATCH_FLOOR, value_name = "N")]
    pub batch_min: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shuffle rows before batching (default: on for id-* metrics).
    #[arg(long, overrides_with = "no_shuffle")]
    pub shuffle: bool,
    #[arg(long, overrides_with = "shuffle")]
    pub no_shuffle: bool,
    /// Comma-separated layer indices (default: all).
    #[arg(long, value_delimiter = ',', value_name = "I,J,..")]
    pub layers: Option<Vec<usize>>,
    #[arg(long, value_name = "FRACTION")]
    pub twonn_discard: Option<f64>,
    #[arg(long, value_name = "K")]
    pub k_mada: Option<usize>,
    #[arg(long, value_name = "K")]
    pub k_mom: Option<usize>,
    #[arg(long, value_enum)]
    pub mada_aggregation: Option<AggregationArg>,
    /// Distance at or below which a nearest neighbor counts as a duplicate.
    #[arg(long, value_name = "TOL")]
    pub duplicate_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_name = "DUMP")]
    pub input: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Output file; with several formats the extension is replaced per
    /// format. Defaults to stdout for a single format.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    pub format: Vec<FormatArg>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[arg(value_name = "DUMP", required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Directory receiving series.json, series.csv, series_layers.csv and
    /// series.svg.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Also write series_layers.svg (one line per checkpoint over layers).
    #[arg(long)]
    pub per_layer_svg: bool,
}
