//! Command-line front end.
//!
//! Every command reads an optional flat JSON config (`--config`) and overlays
//! the flags given on the command line, so flags win. Exit status is 0 on
//! success, 1 on usage or I/O errors and 2 when a fit did not converge (its
//! results are still written).

mod commands;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::density::DensityError;
use crate::metrics::MetricsError;
use crate::network::NetworkError;
use crate::simulate::{SimError, WeightKind};
use crate::variational::{FitConfig, FitError, WeightMode};

pub use commands::{
    bench_modes, bench_summary, cmd_bench, cmd_eval, cmd_fit, cmd_select, cmd_simulate, ks_against_truth, run_bench,
    score_fit, write_fit, BenchRow, DensityFile, FitDocument,
};
pub use io::IoError;

/// Environment variable capping the worker thread count; 0 or unset means automatic.
pub const THREADS_ENV: &str = "NPWNET_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("missing truth: {0}")]
    MissingTruth(String),
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "npwnet", version, about = "Nonparametric weighted network clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a planted network and write edges.csv, labels.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit the model to an edge list.
    Fit(FitArgs),
    /// Fit a range of K and pick one by ICL.
    Select(SelectArgs),
    /// Score a fit against the truth and describe the weights.
    Eval(EvalArgs),
    /// Repeat simulate, fit and eval over seeded replicates.
    Bench(BenchArgs),
}

fn parse_weight_mode(s: &str) -> Result<WeightMode, String> {
    s.parse()
}

fn parse_weight_kind(s: &str) -> Result<WeightKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "normal" => Ok(WeightKind::Normal),
        "gamma" => Ok(WeightKind::Gamma),
        "none" | "binary" => Ok(WeightKind::None),
        other => Err(format!("unknown weight distribution '{other}' (expected normal, gamma or none)")),
    }
}

/// Generator flags shared by `simulate` and `bench`.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SimFlags {
    /// Number of nodes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of clusters.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Cluster proportions, comma separated (default uniform).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    /// Sparsity parameters, comma separated (default -1,1 for K = 2).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Weight distribution: normal, gamma or none.
    #[arg(long, value_parser = parse_weight_kind)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightKind>,
    /// Random seed (required).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Fitting flags shared by `fit`, `select` and `bench`.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TuningFlags {
    /// Outer EM iteration limit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Relative ELBO change that counts as converged.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo_rel_tol: Option<f64>,
    /// Random restarts; the highest final ELBO is kept.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    /// Minorize-maximize sweeps per E-step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mm_inner_iters: Option<usize>,
    /// Local polynomial degree of the density fits (0, 1 or 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_degree: Option<usize>,
    /// Number of density grid points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_grid_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimFlags,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Edge list with header i,j,w.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    /// Node count (default: largest index + 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of clusters.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// nonparametric, normal, gamma or none.
    #[arg(long, value_parser = parse_weight_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mode: Option<WeightMode>,
    /// Random seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tuning: TuningFlags,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Edge list with header i,j,w.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    /// Node count (default: largest index + 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Candidate K values: a list `1,2,3` or a range `1..4` (inclusive).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_range: Option<String>,
    /// nonparametric, normal, gamma or none.
    #[arg(long, value_parser = parse_weight_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mode: Option<WeightMode>,
    /// Random seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tuning: TuningFlags,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<PathBuf>,
    /// Directory written by `simulate`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Edge list for descriptive statistics.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimFlags,
    /// Number of seeded replicates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tuning: TuningFlags,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub n: usize,
    pub k: usize,
    pub pi: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub weights: WeightKind,
    /// Upper-triangle block parameters, row-major.
    pub block_params: Option<Vec<(f64, f64)>>,
    pub seed: Option<u64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { n: 100, k: 2, pi: None, theta: None, weights: WeightKind::Normal, block_params: None, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningSettings {
    pub max_iter: usize,
    pub elbo_rel_tol: f64,
    pub restarts: usize,
    pub mm_inner_iters: usize,
    pub density_degree: usize,
    pub density_grid_size: usize,
}

impl Default for TuningSettings {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            max_iter: d.max_iter,
            elbo_rel_tol: d.elbo_rel_tol,
            restarts: d.restarts,
            mm_inner_iters: d.mm_inner_iters,
            density_degree: d.density_degree,
            density_grid_size: d.density_grid_size,
        }
    }
}

impl TuningSettings {
    pub fn to_config(&self, k: usize, seed: u64, weight_mode: WeightMode) -> FitConfig {
        FitConfig {
            k,
            max_iter: self.max_iter,
            elbo_rel_tol: self.elbo_rel_tol,
            restarts: self.restarts,
            mm_inner_iters: self.mm_inner_iters,
            seed,
            weight_mode,
            density_degree: self.density_degree,
            density_grid_size: self.density_grid_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    #[serde(flatten)]
    pub sim: SimSettings,
    pub out: Option<PathBuf>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self { sim: SimSettings::default(), out: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub edges: Option<PathBuf>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub weight_mode: WeightMode,
    pub seed: u64,
    #[serde(flatten)]
    pub tuning: TuningSettings,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectSettings {
    pub edges: Option<PathBuf>,
    pub n: Option<usize>,
    pub k_range: Option<String>,
    pub weight_mode: WeightMode,
    pub seed: u64,
    #[serde(flatten)]
    pub tuning: TuningSettings,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub fit: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    #[serde(flatten)]
    pub sim: SimSettings,
    pub replicates: usize,
    #[serde(flatten)]
    pub tuning: TuningSettings,
    pub out: Option<PathBuf>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { sim: SimSettings::default(), replicates: 20, tuning: TuningSettings::default(), out: None }
    }
}

/// Overlays the non-empty flags onto the config file's keys and decodes the result.
pub fn merge_settings<S: DeserializeOwned>(config: Option<&Path>, flags: &impl Serialize) -> Result<S, CliError> {
    let mut map = match config {
        Some(path) => match io::read_json::<Value>(path)? {
            Value::Object(m) => m,
            _ => return Err(CliError::Usage(format!("{}: config must be a JSON object", path.display()))),
        },
        None => Map::new(),
    };
    let flags = serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Value::Object(f) = flags {
        map.extend(f);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(format!("invalid settings: {e}")))
}

/// Parses `1..4` (inclusive) or `1,2,3`.
pub fn parse_k_range(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("invalid K range '{spec}'"));
    let ks: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

/// Sizes the global thread pool from `NPWNET_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a nonnegative integer, got '{raw}'")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let s: SimulateSettings = merge_settings(args.config.as_deref(), &args)?;
            cmd_simulate(&s)
        }
        Command::Fit(args) => {
            let s: FitSettings = merge_settings(args.config.as_deref(), &args)?;
            cmd_fit(&s)
        }
        Command::Select(args) => {
            let s: SelectSettings = merge_settings(args.config.as_deref(), &args)?;
            cmd_select(&s)
        }
        Command::Eval(args) => {
            let s: EvalSettings = merge_settings(args.config.as_deref(), &args)?;
            cmd_eval(&s)
        }
        Command::Bench(args) => {
            let s: BenchSettings = merge_settings(args.config.as_deref(), &args)?;
            cmd_bench(&s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"k": 3, "restarts": 2, "seed": 9, "weight_mode": "normal"}"#).unwrap();
        let args = FitArgs {
            config: Some(cfg.clone()),
            edges: None,
            n: None,
            k: Some(4),
            weight_mode: None,
            seed: None,
            tuning: TuningFlags::default(),
            out: None,
        };
        let s: FitSettings = merge_settings(Some(&cfg), &args).unwrap();
        assert_eq!(s.k, Some(4));
        assert_eq!(s.seed, 9);
        assert_eq!(s.tuning.restarts, 2);
        assert_eq!(s.weight_mode, WeightMode::Normal);
        assert_eq!(s.tuning.max_iter, 200);
    }

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_k_range("2,5").unwrap(), vec![2, 5]);
        assert!(parse_k_range("0..2").is_err());
        assert!(parse_k_range("x").is_err());
    }

    #[test]
    fn hyphenated_theta_parses() {
        let cli = Cli::try_parse_from(["npwnet", "simulate", "--theta", "-1,1", "--seed", "3"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!("simulate") };
        assert_eq!(a.sim.theta, Some(vec![-1.0, 1.0]));
    }
}
