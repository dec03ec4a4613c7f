//! Variational EM for the weighted block model.
//!
//! Each node `i` carries a membership distribution `gamma_i` over `K`
//! clusters. Edges between clusters `k` and `l` appear with probability
//! `logistic(theta_k + theta_l)` and carry weights drawn from the block density
//! `f_kl`, which is estimated nonparametrically, parametrically (Normal or
//! Gamma) or ignored altogether in binary mode.

mod estep;
mod exact;
mod fit;
mod init;
mod mstep;
mod qp;
mod terms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockTable;
use crate::density::{DensityError, DensityEstimate, DENSITY_FLOOR};
use crate::math::{argmax, sigmoid};
use crate::network::Labels;
use crate::simulate::ParametricFamily;

pub use estep::e_step;
pub use exact::{exact_loglik_small, MAX_ENUMERATION};
pub use fit::{fit, fit_from_responsibilities};
pub use init::{initial_responsibilities, kmeans_labels};
pub use mstep::{m_step_pi, m_step_theta, m_step_weights, ThetaUpdate, WeightUpdate, THETA_CAP};
pub use qp::{solve_node_qp, solve_node_qp_with_floor};
pub use terms::{complete_loglik, elbo, surrogate_q};

/// Lower clamp applied to responsibilities before they enter any logarithm.
pub const GAMMA_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gamma_hat must be strictly positive")]
    NonPositiveGammaHat,
    #[error("infeasible QP coefficients: {0}")]
    InfeasibleCoefficients(String),
    #[error("theta update produced non-finite values")]
    NonFiniteTheta,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid responsibilities: {0}")]
    InvalidResponsibilities(String),
    #[error("K^n = {k}^{n} exceeds the enumeration limit")]
    TooLargeToEnumerate { n: usize, k: usize },
    #[error("weight mode {0} has no block densities")]
    MissingDensities(WeightMode),
    #[error("all restarts failed: {0}")]
    AllRestartsFailed(String),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// How edge weights enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Nonparametric,
    Normal,
    Gamma,
    /// Weights are ignored and only edge presence is modelled.
    #[serde(rename = "none")]
    Binary,
}

impl WeightMode {
    pub const ALL: [WeightMode; 4] =
        [WeightMode::Nonparametric, WeightMode::Normal, WeightMode::Gamma, WeightMode::Binary];

    pub fn family(self) -> Option<ParametricFamily> {
        match self {
            Self::Normal => Some(ParametricFamily::Normal),
            Self::Gamma => Some(ParametricFamily::Gamma),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nonparametric => "nonparametric",
            Self::Normal => "normal",
            Self::Gamma => "gamma",
            Self::Binary => "none",
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nonparametric" | "np" => Ok(Self::Nonparametric),
            "normal" => Ok(Self::Normal),
            "gamma" => Ok(Self::Gamma),
            "none" | "binary" => Ok(Self::Binary),
            other => Err(format!("unknown weight mode '{other}' (expected nonparametric, normal, gamma or none)")),
        }
    }
}

/// Block weight model fitted in the M-step.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockWeights {
    Nonparametric(BlockTable<DensityEstimate>),
    Parametric(ParametricFamily, BlockTable<(f64, f64)>),
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub weights: BlockWeights,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, pi: Vec<f64>, weights: BlockWeights) -> Result<Self, FitError> {
        let params = Self { theta, pi, weights };
        params.validate()?;
        Ok(params)
    }

    pub fn binary(theta: Vec<f64>, pi: Vec<f64>) -> Result<Self, FitError> {
        Self::new(theta, pi, BlockWeights::Binary)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let k = self.theta.len();
        if k == 0 || self.pi.len() != k {
            return Err(FitError::ShapeMismatch(format!("theta has {} entries, pi has {}", k, self.pi.len())));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(FitError::NonFiniteTheta);
        }
        let sum: f64 = self.pi.iter().sum();
        if self.pi.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(FitError::ShapeMismatch(format!("pi is not a simplex vector: {:?}", self.pi)));
        }
        let table_k = match &self.weights {
            BlockWeights::Nonparametric(t) => Some(t.k()),
            BlockWeights::Parametric(family, t) => {
                if let Some(((a, b), p)) = t.iter().find(|(_, &p)| !family.validate(p)) {
                    return Err(FitError::ShapeMismatch(format!(
                        "block ({a}, {b}) parameters {p:?} invalid for {family:?}"
                    )));
                }
                Some(t.k())
            }
            BlockWeights::Binary => None,
        };
        match table_k {
            Some(tk) if tk != k => {
                Err(FitError::ShapeMismatch(format!("weight table is for K = {tk}, theta for K = {k}")))
            }
            _ => Ok(()),
        }
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn weight_mode(&self) -> WeightMode {
        match &self.weights {
            BlockWeights::Nonparametric(_) => WeightMode::Nonparametric,
            BlockWeights::Parametric(ParametricFamily::Normal, _) => WeightMode::Normal,
            BlockWeights::Parametric(ParametricFamily::Gamma, _) => WeightMode::Gamma,
            BlockWeights::Binary => WeightMode::Binary,
        }
    }

    pub fn edge_probability(&self, k: usize, l: usize) -> f64 {
        sigmoid(self.theta[k] + self.theta[l])
    }

    pub fn densities(&self) -> Option<&BlockTable<DensityEstimate>> {
        match &self.weights {
            BlockWeights::Nonparametric(t) => Some(t),
            _ => None,
        }
    }

    pub fn parametric(&self) -> Option<&BlockTable<(f64, f64)>> {
        match &self.weights {
            BlockWeights::Parametric(_, t) => Some(t),
            _ => None,
        }
    }

    /// Floored log-density of block `(k, l)` at `w`; `None` in binary mode.
    pub fn log_weight_density(&self, k: usize, l: usize, w: f64) -> Option<f64> {
        match &self.weights {
            BlockWeights::Nonparametric(t) => Some(t.get(k, l).log_evaluate(w)),
            BlockWeights::Parametric(family, t) => Some(family.log_pdf(*t.get(k, l), w).max(DENSITY_FLOOR.ln())),
            BlockWeights::Binary => None,
        }
    }

    /// `int f_kl - 1`, zero for normalized and parametric densities.
    pub fn density_excess_mass(&self, k: usize, l: usize) -> f64 {
        match &self.weights {
            BlockWeights::Nonparametric(t) => t.get(k, l).integral() - 1.0,
            _ => 0.0,
        }
    }

    /// Relabels clusters so that new cluster `a` is old cluster `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let weights = match &self.weights {
            BlockWeights::Nonparametric(t) => BlockWeights::Nonparametric(t.permuted(perm)),
            BlockWeights::Parametric(f, t) => BlockWeights::Parametric(*f, t.permuted(perm)),
            BlockWeights::Binary => BlockWeights::Binary,
        };
        Self {
            theta: perm.iter().map(|&p| self.theta[p]).collect(),
            pi: perm.iter().map(|&p| self.pi[p]).collect(),
            weights,
        }
    }
}

/// Row-stochastic `n x K` matrix of membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub const ROW_TOL: f64 = 1e-10;

    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self, FitError> {
        if k == 0 || data.len() != n * k {
            return Err(FitError::ShapeMismatch(format!("{} entries for an {n} x {k} matrix", data.len())));
        }
        for (i, row) in data.chunks(k).enumerate() {
            if row.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
                return Err(FitError::InvalidResponsibilities(format!("row {i} has invalid entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_TOL {
                return Err(FitError::InvalidResponsibilities(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { n, k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FitError> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(FitError::ShapeMismatch("rows differ in length".into()));
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self { n, k, data: vec![1.0 / k as f64; n * k] }
    }

    pub fn from_labels(labels: &Labels) -> Self {
        let k = labels.k();
        let mut data = vec![0.0; labels.len() * k];
        for (i, &z) in labels.as_slice().iter().enumerate() {
            data[i * k + z] = 1.0;
        }
        Self { n: labels.len(), k, data }
    }

    pub(crate) fn from_raw(n: usize, k: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * k);
        Self { n, k, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.k + k]
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, g) in sums.iter_mut().zip(row) {
                *s += g;
            }
        }
        sums
    }

    /// Row-wise argmax, ties to the lowest cluster index.
    pub fn hard_labels(&self) -> Labels {
        Labels::new(self.rows().map(argmax).collect(), self.k).expect("argmax is below K")
    }

    /// Raises every entry to at least `floor` and renormalizes each row.
    pub fn clamped(&self, floor: f64) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.k) {
            for g in row.iter_mut() {
                *g = g.max(floor);
            }
            let sum: f64 = row.iter().sum();
            for g in row.iter_mut() {
                *g /= sum;
            }
        }
        Self { n: self.n, k: self.k, data }
    }

    /// New column `a` is old column `perm[a]`.
    pub fn permuted_columns(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(perm.iter().map(|&p| row[p]));
        }
        Self { n: self.n, k: self.k, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    pub elbo_rel_tol: f64,
    pub restarts: usize,
    pub mm_inner_iters: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub density_degree: usize,
    pub density_grid_size: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_iter: 200,
            elbo_rel_tol: 1e-6,
            restarts: 5,
            mm_inner_iters: 5,
            seed: 0,
            weight_mode: WeightMode::Nonparametric,
            density_degree: 2,
            density_grid_size: 101,
        }
    }
}

impl FitConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |msg: &str| Err(FitError::InvalidConfig(msg.to_string()));
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if self.max_iter == 0 || self.restarts == 0 || self.mm_inner_iters == 0 {
            return bad("iteration and restart counts must be positive");
        }
        if !(self.elbo_rel_tol > 0.0 && self.elbo_rel_tol.is_finite()) {
            return bad("elbo_rel_tol must be positive");
        }
        if self.density_degree > 2 {
            return bad("density degree must be 0, 1 or 2");
        }
        if self.density_grid_size < 2 {
            return bad("density grid needs at least 2 points");
        }
        Ok(())
    }
}

/// Counters collected while fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub restart: usize,
    pub iterations: usize,
    pub restart_elbos: Vec<Option<f64>>,
    /// Weight M-steps rejected because they would have lowered the ELBO.
    pub rejected_weight_updates: usize,
    /// Block pairs that fell back to the pooled weight estimate in the final M-step.
    pub empty_blocks: Vec<(usize, usize)>,
    /// Density grid points where the local fit failed, in the final M-step.
    pub flagged_grid_points: usize,
    pub theta_saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub gamma: Responsibilities,
    pub hard_labels: Labels,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub icl: Option<f64>,
    pub config: FitConfig,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn final_elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("trace holds the initial ELBO")
    }
}
