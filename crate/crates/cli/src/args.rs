//! Flags and their TOML mirror. Every subcommand's flags double as a config
//! table of the same name; a flag given on the command line wins.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "rnnsm", version, about = "State-machine abstraction, coverage and error prediction for recurrent classifiers")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; never changes results.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a state machine from a training bundle.
    Extract(ExtractArgs),
    /// Quality metrics of one or more state machines.
    Score(ScoreArgs),
    /// Coverage of a test suite.
    Coverage(CoverageArgs),
    /// KS significance of coverage criteria over a family of suites.
    KsTest(KsTestArgs),
    /// Train the error-predicting decision tree.
    TrainPredictor(TrainPredictorArgs),
    /// Score traces with a trained predictor (bundle or JSON lines on stdin).
    Predict(PredictArgs),
    /// Generate trace bundles with planted structure.
    Synth(SynthArgs),
    /// Extract and score one machine per K.
    SweepK(SweepArgs),
    /// Run a recurrent model from exported weights and record a trace bundle.
    Infer(InferArgs),
}

/// Fill every unset field of `$a` from `$b`.
macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),* $(,)?) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Kmeans,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionArg {
    None,
    Pca,
    Lda,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExtractArgs {
    /// Training trace bundle.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Number of clusters (kmeans, default 25).
    #[arg(long)]
    pub k: Option<usize>,
    /// Cells per dimension (grid, default 10).
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long, value_enum)]
    pub projection: Option<ProjectionArg>,
    /// Components kept by the projection (default 3).
    #[arg(long)]
    pub projection_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent k-means starts.
    #[arg(long)]
    pub n_init: Option<usize>,
    /// State machine JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExtractArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; train, method, k, cells, projection, projection_k, seed, n_init, out);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScoreArgs {
    /// State machine JSON files.
    #[arg(long, num_args = 1..)]
    pub sm: Option<Vec<PathBuf>>,
    /// Purity exponent in goodness.
    #[arg(long)]
    pub exponent: Option<i32>,
}

impl ScoreArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; sm, exponent);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CoverageArgs {
    #[arg(long)]
    pub sm: Option<PathBuf>,
    /// Test suite bundle.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// `all` or a comma-separated list of criterion names.
    #[arg(long)]
    pub criteria: Option<String>,
}

impl CoverageArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; sm, suite, criteria);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct KsTestArgs {
    /// One state machine per model column.
    #[arg(long, num_args = 1..)]
    pub sm: Option<Vec<PathBuf>>,
    /// Directory whose subdirectories are suite bundles.
    #[arg(long)]
    pub suites_dir: Option<PathBuf>,
    /// `all` or a comma-separated list of criterion names.
    #[arg(long)]
    pub criterion: Option<String>,
}

impl KsTestArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; sm, suites_dir, criterion);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainPredictorArgs {
    #[arg(long)]
    pub sm: Option<PathBuf>,
    /// Labeled suite the tree is grown on.
    #[arg(long)]
    pub train_suite: Option<PathBuf>,
    /// Labeled suite used to pick the pruning strength.
    #[arg(long)]
    pub validation_suite: Option<PathBuf>,
    /// Labeled suite the reported AUC comes from.
    #[arg(long)]
    pub eval_suite: Option<PathBuf>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Fixed pruning strength; ignored when a validation suite is given.
    #[arg(long)]
    pub ccp_alpha: Option<f64>,
    /// Tree JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainPredictorArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; sm, train_suite, validation_suite, eval_suite, max_depth, min_leaf, ccp_alpha, out);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub sm: Option<PathBuf>,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Bundle to score; without it, traces are read as JSON lines from stdin.
    #[arg(long)]
    pub suite: Option<PathBuf>,
}

impl PredictArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; sm, tree, suite);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementArg {
    Silent,
    LabelFlip,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory: `train/`, `suites/suite-NNN/` and `.truth.json` sidecars.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub transit_centers: Option<usize>,
    #[arg(long)]
    pub terminal_centers: Option<usize>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub purity: Option<f64>,
    #[arg(long)]
    pub impure_fraction: Option<f64>,
    #[arg(long)]
    pub low_purity: Option<f64>,
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long)]
    pub purity_threshold: Option<f64>,
    #[arg(long)]
    pub impure_boost: Option<f64>,
    #[arg(long)]
    pub off_manifold_boost: Option<f64>,
    #[arg(long, value_enum)]
    pub placement: Option<PlacementArg>,
    #[arg(long)]
    pub train_traces: Option<usize>,
    /// Timesteps per trace.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub suites: Option<usize>,
    #[arg(long)]
    pub suite_size: Option<usize>,
    #[arg(long)]
    pub perturbation: Option<f64>,
}

impl SynthArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b;
            seed, out_dir, dim, transit_centers, terminal_centers, labels, noise_sigma, separation,
            purity, impure_fraction, low_purity, base_rate, purity_threshold, impure_boost,
            off_manifold_boost, placement, train_traces, length, suites, suite_size, perturbation,
        );
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub k_list: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub exponent: Option<i32>,
}

impl SweepArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; train, k_list, seed, exponent);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleArg {
    Training,
    Test,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InferArgs {
    /// Weight JSON.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// JSON lines, one input sequence per line.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Trace bundle directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl InferArgs {
    fn merge(&mut self, b: Self) {
        merge_fields!(self, b; weights, inputs, out, role);
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub workers: Option<usize>,
    pub format: Option<Format>,
    /// Used by stochastic subcommands whose own table has no seed.
    pub seed: Option<u64>,
    pub extract: ExtractArgs,
    pub score: ScoreArgs,
    pub coverage: CoverageArgs,
    pub ks_test: KsTestArgs,
    pub train_predictor: TrainPredictorArgs,
    pub predict: PredictArgs,
    pub synth: SynthArgs,
    pub sweep_k: SweepArgs,
    pub infer: InferArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

/// Resolved global settings.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub workers: Option<usize>,
    pub format: Format,
}

/// Apply the config file under the command-line flags.
pub fn resolve(cli: Cli) -> CliResult<(Globals, Command)> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let globals = Globals {
        workers: cli.workers.or(file.workers),
        format: cli.format.or(file.format).unwrap_or_default(),
    };
    let seed = file.seed;
    let mut command = cli.command;
    match &mut command {
        Command::Extract(a) => {
            a.merge(file.extract);
            a.seed = a.seed.or(seed);
        }
        Command::Score(a) => a.merge(file.score),
        Command::Coverage(a) => a.merge(file.coverage),
        Command::KsTest(a) => a.merge(file.ks_test),
        Command::TrainPredictor(a) => a.merge(file.train_predictor),
        Command::Predict(a) => a.merge(file.predict),
        Command::Synth(a) => {
            a.merge(file.synth);
            a.seed = a.seed.or(seed);
        }
        Command::SweepK(a) => {
            a.merge(file.sweep_k);
            a.seed = a.seed.or(seed);
        }
        Command::Infer(a) => a.merge(file.infer),
    }
    Ok((globals, command))
}

/// Unwrap a setting that has no default.
pub fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("missing required setting --{flag}")))
}
