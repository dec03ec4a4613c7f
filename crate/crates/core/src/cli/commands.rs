use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{
    ensure_dir, read_density, read_edge_list, read_json, read_labels, write_csv_rows, write_density, write_edge_list,
    write_json, write_labels,
};
use super::{
    parse_k_range, BenchSettings, CliError, EvalSettings, FitSettings, Outcome, SelectSettings, SimSettings,
    SimulateSettings,
};
use crate::blocks::BlockTable;
use crate::density::{pooled_grid, DensityEstimate, DENSITY_FLOOR};
use crate::math::fmt_g17;
use crate::metrics::{
    best_label_matching, descriptive_stats, ks_statistic, log_rand_index, rase_theta, Descriptive, MetricReport,
};
use crate::network::{Labels, WeightedNetwork};
use crate::selection::select_k_with_fits;
use crate::simulate::{simulate, GeneratorConfig, ParametricFamily, WeightKind, WeightModel};
use crate::variational::{fit, BlockWeights, FitConfig, FitDiagnostics, FitResult, ModelParams, WeightMode};

/// Reference to one exported block density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFile {
    pub k: usize,
    pub l: usize,
    /// File name relative to the fit directory.
    pub file: String,
    pub bandwidth: f64,
    pub degree: usize,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub n: usize,
    pub k: usize,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub labels: Vec<usize>,
    /// Responsibilities, row-major `n x K`.
    pub gamma: Vec<f64>,
    pub elbo_trace: Vec<f64>,
    pub final_elbo: f64,
    pub icl: Option<f64>,
    pub converged: bool,
    /// Fitted `(mean, sd)` or `(shape, rate)` per block, upper triangle row-major.
    #[serde(default)]
    pub block_params: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub densities: Vec<DensityFile>,
    #[serde(default)]
    pub edges: Option<PathBuf>,
    pub config: FitConfig,
    pub diagnostics: FitDiagnostics,
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path, CliError> {
    out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage("--seed is required".into()))
}

/// Evenly spaced from -1 to 1, so `K = 2` gives `(-1, 1)`.
fn default_theta(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.0];
    }
    (0..k).map(|a| -1.0 + 2.0 * a as f64 / (k - 1) as f64).collect()
}

impl SimSettings {
    /// Fills in defaults and checks the result.
    pub fn generator(&self, seed: u64) -> Result<GeneratorConfig, CliError> {
        let k = self.k;
        if k == 0 {
            return Err(CliError::Usage("K must be at least 1".into()));
        }
        let weight_model = match (self.weights.family(), &self.block_params) {
            (None, _) => WeightModel::none(),
            (Some(family), Some(params)) => {
                let table = BlockTable::from_upper(k, params.clone()).ok_or_else(|| {
                    CliError::Usage(format!("block_params needs {} entries for K = {k}", k * (k + 1) / 2))
                })?;
                WeightModel::parametric(family, table)?
            }
            (Some(ParametricFamily::Normal), None) => WeightModel::default_normal(k),
            (Some(ParametricFamily::Gamma), None) if k == 2 => WeightModel::default_gamma(),
            (Some(ParametricFamily::Gamma), None) => {
                return Err(CliError::Usage("gamma weights with K != 2 need block_params".into()))
            }
        };
        let cfg = GeneratorConfig {
            n: self.n,
            k,
            pi: self.pi.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]),
            theta: self.theta.clone().unwrap_or_else(|| default_theta(k)),
            weight_model,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn cmd_simulate(s: &SimulateSettings) -> Result<Outcome, CliError> {
    let seed = require_seed(s.sim.seed)?;
    let out = require_out(&s.out)?;
    let cfg = s.sim.generator(seed)?;
    let (labels, net) = simulate(&cfg)?;
    ensure_dir(out)?;
    write_edge_list(&out.join("edges.csv"), &net)?;
    write_labels(&out.join("labels.csv"), &labels)?;
    write_json(&out.join("truth.json"), &cfg)?;
    info!("simulated {} nodes and {} edges into {}", net.node_count(), net.edge_count(), out.display());
    Ok(Outcome::Success)
}

fn load_network(edges: &Option<PathBuf>, n: Option<usize>) -> Result<(PathBuf, WeightedNetwork), CliError> {
    let path = edges.clone().ok_or_else(|| CliError::Usage("--edges is required".into()))?;
    let net = read_edge_list(&path, n)?;
    Ok((path, net))
}

/// Log densities of fitted parametric blocks tabulated on a grid.
fn tabulate_parametric(
    family: ParametricFamily,
    params: &BlockTable<(f64, f64)>,
    grid: &[f64],
) -> Result<BlockTable<DensityEstimate>, CliError> {
    let floor = DENSITY_FLOOR.ln();
    let mut out = Vec::with_capacity(params.pair_count());
    for p in params.values() {
        let logs = grid.iter().map(|&w| family.log_pdf(*p, w).max(floor)).collect();
        out.push(DensityEstimate::from_table(grid.to_vec(), logs, 0.0, 0)?);
    }
    Ok(BlockTable::from_upper(params.k(), out).expect("one entry per block"))
}

fn density_grid(net: &WeightedNetwork, size: usize) -> Option<Vec<f64>> {
    let w: Vec<f64> = net.weights().collect();
    pooled_grid(&w, size).ok().map(|(g, _)| g)
}

/// Writes `fit.json`, `assignments.csv` and one density CSV per block.
pub fn write_fit(out: &Path, net: &WeightedNetwork, result: &FitResult, edges: Option<&Path>) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut densities = Vec::new();
    let tables = match &result.params.weights {
        BlockWeights::Nonparametric(t) => Some(t.clone()),
        BlockWeights::Parametric(family, params) => density_grid(net, result.config.density_grid_size)
            .map(|grid| tabulate_parametric(*family, params, &grid))
            .transpose()?,
        BlockWeights::Binary => None,
    };
    if let Some(tables) = tables {
        for ((a, b), est) in tables.iter() {
            let file = format!("density_{a}_{b}.csv");
            write_density(&out.join(&file), est)?;
            densities.push(DensityFile { k: a, l: b, file, bandwidth: est.bandwidth, degree: est.degree });
        }
    }
    let doc = FitDocument {
        n: net.node_count(),
        k: result.params.k(),
        weight_mode: result.config.weight_mode,
        seed: result.config.seed,
        theta: result.params.theta.clone(),
        pi: result.params.pi.clone(),
        labels: result.hard_labels.as_slice().to_vec(),
        gamma: result.gamma.as_slice().to_vec(),
        elbo_trace: result.elbo_trace.clone(),
        final_elbo: result.final_elbo(),
        icl: result.icl,
        converged: result.converged,
        block_params: result.params.parametric().map(|t| t.values().to_vec()),
        densities,
        edges: edges.map(|p| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())),
        config: result.config.clone(),
        diagnostics: result.diagnostics.clone(),
    };
    write_json(&out.join("fit.json"), &doc)?;
    write_labels(&out.join("assignments.csv"), &result.hard_labels)?;
    Ok(())
}

pub fn cmd_fit(s: &FitSettings) -> Result<Outcome, CliError> {
    let out = require_out(&s.out)?;
    let k = s.k.ok_or_else(|| CliError::Usage("--k is required".into()))?;
    let (path, net) = load_network(&s.edges, s.n)?;
    let config = s.tuning.to_config(k, s.seed, s.weight_mode);
    let result = fit(&net, &config)?;
    write_fit(out, &net, &result, Some(&path))?;
    println!(
        "K={} mode={} final_elbo={} icl={} converged={}",
        k,
        s.weight_mode,
        fmt_g17(result.final_elbo()),
        result.icl.map_or("NA".into(), fmt_g17),
        result.converged
    );
    if result.converged {
        Ok(Outcome::Success)
    } else {
        warn!("fit did not converge within {} iterations", config.max_iter);
        Ok(Outcome::NotConverged)
    }
}

fn opt_g17(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_g17)
}

pub fn cmd_select(s: &SelectSettings) -> Result<Outcome, CliError> {
    let out = require_out(&s.out)?;
    let ks = parse_k_range(s.k_range.as_deref().unwrap_or("1..4"))?;
    let (_, net) = load_network(&s.edges, s.n)?;
    let config = s.tuning.to_config(ks[0], s.seed, s.weight_mode);
    config.validate()?;
    let (report, _) = select_k_with_fits(&net, &ks, &config)?;
    ensure_dir(out)?;
    let rows = report
        .per_k
        .iter()
        .map(|e| format!("{},{},{},{}", e.k, opt_g17(e.icl), opt_g17(e.final_elbo), e.converged))
        .collect();
    write_csv_rows(&out.join("icl.csv"), "K,icl,final_elbo,converged", rows)?;
    write_json(&out.join("icl.json"), &report)?;
    match report.best_k {
        Some(k) => println!("best_k={k}"),
        None => println!("best_k=NA"),
    }
    if report.best_k.is_some() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::NotConverged)
    }
}

/// Fitted block densities as tabulated estimates, if the fit has any.
fn fitted_densities(
    params: &ModelParams,
    net: Option<&WeightedNetwork>,
    grid_size: usize,
) -> Result<Option<BlockTable<DensityEstimate>>, CliError> {
    match &params.weights {
        BlockWeights::Nonparametric(t) => Ok(Some(t.clone())),
        BlockWeights::Parametric(family, p) => match net.and_then(|n| density_grid(n, grid_size)) {
            Some(grid) => tabulate_parametric(*family, p, &grid).map(Some),
            None => Ok(None),
        },
        BlockWeights::Binary => Ok(None),
    }
}

/// KS distance of each fitted block density to the matching true block.
/// `perm[a]` is the fitted cluster matched to true cluster `a`.
pub fn ks_against_truth(
    fitted: &BlockTable<DensityEstimate>,
    truth: &WeightModel,
    perm: &[usize],
) -> Option<BlockTable<f64>> {
    truth.kind.family()?;
    Some(BlockTable::from_fn(fitted.k(), |a, b| {
        let est = fitted.get(perm[a], perm[b]);
        ks_statistic(est, |w| truth.pdf(a, b, w).unwrap_or(0.0))
    }))
}

fn block_descriptives(net: &WeightedNetwork, labels: &Labels) -> BlockTable<Option<Descriptive>> {
    let k = labels.k();
    let mut samples = BlockTable::from_fn(k, |_, _| Vec::new());
    for e in net.edges() {
        samples.get_mut(labels.get(e.i), labels.get(e.j)).push(e.w);
    }
    samples.map(|w| descriptive_stats(w).ok())
}

/// Scores a fit against a truth: everything but the descriptive statistics.
pub fn score_fit(
    params: &ModelParams,
    labels: &Labels,
    net: Option<&WeightedNetwork>,
    grid_size: usize,
    truth: &GeneratorConfig,
    true_labels: &Labels,
) -> Result<MetricReport, CliError> {
    let log_ri = Some(log_rand_index(true_labels, labels)?);
    let mut report = MetricReport {
        log_ri,
        log_rase_theta: None,
        ks_per_block: None,
        descriptive: None,
        descriptive_per_block: None,
    };
    if params.k() == truth.k {
        report.log_rase_theta = Some(rase_theta(&params.theta, &truth.theta)?);
        let perm = best_label_matching(true_labels, labels, truth.k)?;
        if let Some(fitted) = fitted_densities(params, net, grid_size)? {
            report.ks_per_block = ks_against_truth(&fitted, &truth.weight_model, &perm);
        }
    }
    Ok(report)
}

fn load_fit(dir: &Path) -> Result<(FitDocument, ModelParams), CliError> {
    let doc: FitDocument = read_json(&dir.join("fit.json"))?;
    let weights = match doc.weight_mode {
        WeightMode::Binary => BlockWeights::Binary,
        WeightMode::Normal | WeightMode::Gamma => {
            let family = doc.weight_mode.family().expect("parametric mode");
            let p = doc.block_params.clone().unwrap_or_default();
            let table = BlockTable::from_upper(doc.k, p)
                .ok_or_else(|| CliError::Usage("fit.json block_params has the wrong length".into()))?;
            BlockWeights::Parametric(family, table)
        }
        WeightMode::Nonparametric => {
            let mut by_pair = BTreeMap::new();
            for d in &doc.densities {
                by_pair.insert((d.k, d.l), read_density(&dir.join(&d.file), d.bandwidth, d.degree)?);
            }
            let mut missing = None;
            let table = BlockTable::from_fn(doc.k, |a, b| {
                by_pair.remove(&(a, b)).unwrap_or_else(|| {
                    missing = Some((a, b));
                    DensityEstimate::from_table(vec![0.0, 1.0], vec![0.0, 0.0], 0.0, 0).expect("valid table")
                })
            });
            if let Some((a, b)) = missing {
                return Err(CliError::Usage(format!("fit.json lists no density for block ({a}, {b})")));
            }
            BlockWeights::Nonparametric(table)
        }
    };
    let params = ModelParams::new(doc.theta.clone(), doc.pi.clone(), weights)?;
    Ok((doc, params))
}

pub fn cmd_eval(s: &EvalSettings) -> Result<Outcome, CliError> {
    let out = require_out(&s.out)?;
    let fitted = s.fit.as_deref().map(load_fit).transpose()?;
    let edges_path = s
        .edges
        .clone()
        .or_else(|| fitted.as_ref().and_then(|(d, _)| d.edges.clone()))
        .or_else(|| s.truth.as_ref().map(|t| t.join("edges.csv")).filter(|p| p.exists()));
    if fitted.is_none() && edges_path.is_none() {
        return Err(CliError::Usage("eval needs --fit or --edges".into()));
    }
    let net = match &edges_path {
        Some(p) => Some(read_edge_list(p, fitted.as_ref().map(|(d, _)| d.n))?),
        None => None,
    };
    let mut report = MetricReport {
        log_ri: None,
        log_rase_theta: None,
        ks_per_block: None,
        descriptive: None,
        descriptive_per_block: None,
    };
    if let (Some(truth_dir), Some((doc, params))) = (&s.truth, &fitted) {
        let truth_file = truth_dir.join("truth.json");
        let labels_file = truth_dir.join("labels.csv");
        for f in [&truth_file, &labels_file] {
            if !f.exists() {
                return Err(CliError::MissingTruth(f.display().to_string()));
            }
        }
        let truth: GeneratorConfig = read_json(&truth_file)?;
        let true_labels = read_labels(&labels_file)?;
        let labels = Labels::new(doc.labels.clone(), doc.k)?;
        report = score_fit(params, &labels, net.as_ref(), doc.config.density_grid_size, &truth, &true_labels)?;
    } else if let Some(truth_dir) = &s.truth {
        if !truth_dir.join("labels.csv").exists() {
            return Err(CliError::MissingTruth(truth_dir.join("labels.csv").display().to_string()));
        }
    }
    if let Some(net) = &net {
        let w: Vec<f64> = net.weights().collect();
        report.descriptive = descriptive_stats(&w).ok();
        if let Some((doc, _)) = &fitted {
            let labels = Labels::new(doc.labels.clone(), doc.k)?;
            if labels.len() == net.node_count() {
                report.descriptive_per_block = Some(block_descriptives(net, &labels));
            }
        }
    }
    ensure_dir(out)?;
    write_json(&out.join("metrics.json"), &report)?;
    let rows = report.rows().into_iter().map(|(m, v)| format!("{m},{}", fmt_g17(v))).collect();
    write_csv_rows(&out.join("metrics.csv"), "metric,value", rows)?;
    for (m, v) in report.rows() {
        println!("{m} {}", fmt_g17(v));
    }
    Ok(Outcome::Success)
}

/// One line of `bench.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub replicate: usize,
    pub mode: WeightMode,
    pub metric: String,
    pub value: f64,
}

/// Weight modes compared by `bench`: nonparametric, the simulated family and binary.
pub fn bench_modes(kind: WeightKind) -> Vec<WeightMode> {
    let parametric = match kind {
        WeightKind::Gamma => WeightMode::Gamma,
        _ => WeightMode::Normal,
    };
    vec![WeightMode::Nonparametric, parametric, WeightMode::Binary]
}

fn bench_replicate(s: &BenchSettings, r: usize, base_seed: u64) -> Vec<BenchRow> {
    let seed = base_seed.wrapping_add(r as u64);
    let modes = bench_modes(s.sim.weights);
    let row = |mode, metric: &str, value| BenchRow { replicate: r, mode, metric: metric.to_string(), value };
    let sim = s.sim.generator(seed).and_then(|cfg| Ok((simulate(&cfg)?, cfg)));
    let ((labels, net), truth) = match sim {
        Ok(v) => v,
        Err(e) => {
            warn!("replicate {r}: simulation failed: {e}");
            return modes.into_iter().map(|m| row(m, "failed", 1.0)).collect();
        }
    };
    let mut rows = Vec::new();
    for mode in modes {
        let config = s.tuning.to_config(truth.k, seed, mode);
        let scored = fit(&net, &config).map_err(CliError::from).and_then(|res| {
            let report =
                score_fit(&res.params, &res.hard_labels, Some(&net), config.density_grid_size, &truth, &labels)?;
            Ok((res, report))
        });
        match scored {
            Ok((res, report)) => {
                rows.extend(report.rows().into_iter().map(|(m, v)| row(mode, &m, v)));
                rows.push(row(mode, "final_elbo", res.final_elbo()));
                if let Some(icl) = res.icl {
                    rows.push(row(mode, "icl", icl));
                }
                rows.push(row(mode, "iterations", res.diagnostics.iterations as f64));
                rows.push(row(mode, "converged", if res.converged { 1.0 } else { 0.0 }));
            }
            Err(e) => {
                warn!("replicate {r}, mode {mode}: {e}");
                rows.push(row(mode, "failed", 1.0));
            }
        }
    }
    rows
}

/// Runs all replicates; rows come back ordered by replicate, then mode.
pub fn run_bench(s: &BenchSettings, base_seed: u64) -> Vec<BenchRow> {
    (0..s.replicates).into_par_iter().flat_map_iter(|r| bench_replicate(s, r, base_seed)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Human-readable summary: mean log RI, median log RASE and KS x 100 per block.
pub fn bench_summary(rows: &[BenchRow]) -> String {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.mode.as_str().to_string(), r.metric.clone())).or_default().push(r.value);
    }
    let mut lines = vec![format!("{:<14} {:<16} {:>12} {:>12} {:>4}", "mode", "metric", "mean", "median", "n")];
    for ((mode, metric), values) in &groups {
        let scale = if metric.starts_with("ks_") { 100.0 } else { 1.0 };
        let label = if scale == 100.0 { format!("{metric} x1e2") } else { metric.clone() };
        if !(metric.starts_with("ks_") || metric == "log_ri" || metric == "log_rase_theta" || metric == "converged") {
            continue;
        }
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        lines.push(format!(
            "{:<14} {:<16} {:>12.4} {:>12.4} {:>4}",
            mode,
            label,
            mean(&scaled),
            median(&scaled),
            scaled.len()
        ));
    }
    lines.join("\n")
}

pub fn cmd_bench(s: &BenchSettings) -> Result<Outcome, CliError> {
    let seed = require_seed(s.sim.seed)?;
    let out = require_out(&s.out)?;
    if s.replicates == 0 {
        return Err(CliError::Usage("replicates must be positive".into()));
    }
    s.sim.generator(seed)?;
    s.tuning.to_config(s.sim.k, seed, WeightMode::Nonparametric).validate()?;
    let rows = run_bench(s, seed);
    ensure_dir(out)?;
    let lines = rows.iter().map(|r| format!("{},{},{},{}", r.replicate, r.mode, r.metric, fmt_g17(r.value))).collect();
    write_csv_rows(&out.join("bench.csv"), "replicate,mode,metric,value", lines)?;
    println!("{}", bench_summary(&rows));
    Ok(Outcome::Success)
}
