use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ersvm_core::experiment::{DataFormat, LabelColumn};

#[derive(Debug, Parser)]
#[command(name = "ersvm", version, about = "Kernel expectile regression with exact dual coordinate ascent")]
pub struct Cli {
    /// Increase log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads for grid runs and kernel construction.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and save it.
    Train(TrainArgs),
    /// Predict with a saved model, one value per input row.
    Predict(PredictArgs),
    /// Cross-validate over a grid, refit the best cell and report.
    Cv(CvArgs),
    /// Iteration and timing statistics over solver configurations.
    Bench(BenchArgs),
    /// Expectile curves along one feature for several levels.
    Curves(CurvesArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Input data file.
    #[arg(long, short = 'd')]
    pub data: PathBuf,

    /// csv or libsvm (`label idx:value ...`).
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: DataFormat,

    /// The CSV file starts with a header row.
    #[arg(long)]
    pub header: bool,

    /// CSV field delimiter (a single character, `tab` for TAB).
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,

    /// CSV label column: first, last, none or a 0-based index.
    #[arg(long)]
    pub label_column: Option<LabelColumn>,

    /// Feature dimension of libsvm files (default: largest index seen).
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GapArg {
    Clipped,
    Unclipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WssArg {
    Scan,
    Wss1,
    Wss2,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Stopping tolerance epsilon of the duality gap test.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,

    /// Clipping bound M.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,

    /// Duality gap variant used for stopping.
    #[arg(long, value_enum, default_value_t = GapArg::Unclipped)]
    pub gap: GapArg,

    /// Update width (default 2d, or 1d with `--wss scan`).
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,

    /// Working-set selection: scan for 1D updates, wss1 or wss2 (default wss2).
    #[arg(long, value_enum)]
    pub wss: Option<WssArg>,

    /// Neighbors searched by WSS2.
    #[arg(long, default_value_t = 15)]
    pub knn: usize,

    /// Cap on coordinate updates per training run.
    #[arg(long)]
    pub max_iter: Option<u64>,

    /// Recompute the state from scratch every this many updates and fail on drift.
    #[arg(long)]
    pub debug_every: Option<u64>,
}

#[derive(Debug, Args, Clone)]
#[group(id = "regularization", multiple = false)]
pub struct Regularization {
    /// Regularization lambda (converted to C = 1 / (2 n lambda)).
    #[arg(long, group = "regularization")]
    pub lambda: Option<f64>,

    /// Cost C.
    #[arg(long, group = "regularization")]
    pub cost: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Where to write the model.
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Expectile level in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,

    #[command(flatten)]
    pub reg: Regularization,

    /// Kernel width gamma of exp(-gamma^2 |x - x'|^2).
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Train on the data as given instead of mapping it onto [-1, 1].
    #[arg(long)]
    pub no_scale: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Saved model.
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Clamp scaled predictions to the model's clipping bound.
    #[arg(long = "clipped")]
    pub clipped: bool,

    /// Output file (default: standard output).
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct GridArgs {
    /// Number of lambda grid values.
    #[arg(long, default_value_t = 10)]
    pub grid_lambdas: usize,

    /// Number of gamma grid values.
    #[arg(long, default_value_t = 10)]
    pub grid_gammas: usize,

    /// Lambda range `low:high` (default `0.001/n:1`).
    #[arg(long, value_parser = parse_range)]
    pub lambda_range: Option<(f64, f64)>,

    /// Gamma range `low:high` (default `0.1 n^(-1/d):0.2`).
    #[arg(long, value_parser = parse_range)]
    pub gamma_range: Option<(f64, f64)>,

    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    /// Seed for the fold assignment and the held-out split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Warm-start each descending-lambda run from the previous solution.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub warm_start: bool,
}

#[derive(Debug, Args, Clone)]
pub struct TableArgs {
    /// Output file for the table (default: standard output).
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,

    /// Output delimiter.
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub out_delimiter: u8,

    /// Leave out wall-time columns so that reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Expectile level in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,

    #[command(flatten)]
    pub grid: GridArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[command(flatten)]
    pub table: TableArgs,

    /// Write the refitted best-cell model here.
    #[arg(long, short = 'm')]
    pub model: Option<PathBuf>,

    /// Hold out this fraction as a test set and report its risk.
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Data files (repeatable); each is scaled onto [-1, 1].
    #[arg(long = "data", short = 'd', required = true)]
    pub data: Vec<PathBuf>,

    /// csv or libsvm.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: DataFormat,

    /// The CSV files start with a header row.
    #[arg(long)]
    pub header: bool,

    /// CSV field delimiter.
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,

    /// CSV label column: first, last, none or a 0-based index.
    #[arg(long)]
    pub label_column: Option<LabelColumn>,

    /// Expectile levels, comma separated.
    #[arg(long, default_value = "0.5", value_delimiter = ',')]
    pub taus: Vec<f64>,

    /// Working-set rules, comma separated.
    #[arg(long = "wss-list", value_enum, default_value = "wss1,wss2", value_delimiter = ',')]
    pub wss_list: Vec<WssArg>,

    /// Initializations, comma separated (warm, cold).
    #[arg(long, value_enum, default_value = "warm", value_delimiter = ',')]
    pub init: Vec<InitArg>,

    /// Gap variants, comma separated.
    #[arg(long = "gaps", value_enum, default_value = "unclipped", value_delimiter = ',')]
    pub gaps: Vec<GapArg>,

    /// Neighbor counts for WSS2, comma separated.
    #[arg(long = "knn-list", default_value = "15", value_delimiter = ',')]
    pub knn_list: Vec<usize>,

    /// Stopping tolerance epsilon of the duality gap test.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,

    /// Clipping bound M.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,

    /// Cap on coordinate updates per training run.
    #[arg(long)]
    pub max_iter: Option<u64>,

    #[command(flatten)]
    pub grid: GridArgs,

    #[command(flatten)]
    pub table: TableArgs,

    /// Emit one row per grid cell besides the aggregate rows.
    #[arg(long)]
    pub per_cell: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Warm,
    Cold,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Expectile levels, comma separated.
    #[arg(long, default_value = "0.25,0.5,0.75", value_delimiter = ',')]
    pub taus: Vec<f64>,

    /// 0-based feature to vary (required for d > 1).
    #[arg(long)]
    pub feature: Option<usize>,

    /// Number of evaluation points.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,

    /// Square-root transform of the varied feature.
    #[arg(long)]
    pub sqrt_x: bool,

    /// Fixed regularization; without it (and --gamma) each curve is cross-validated.
    #[command(flatten)]
    pub reg: Regularization,

    /// Fixed kernel width; requires --lambda or --cost.
    #[arg(long, requires = "regularization")]
    pub gamma: Option<f64>,

    #[command(flatten)]
    pub grid: GridArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[command(flatten)]
    pub table: TableArgs,
}

fn parse_format(s: &str) -> Result<DataFormat, String> {
    s.parse()
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character or `tab`, got `{s}`")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected `low:high`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("invalid bound `{v}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}
