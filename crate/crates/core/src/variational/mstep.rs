use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::blocks::BlockTable;
use crate::density::{
    fit_local_density, pooled_grid, select_bandwidth, DensityError, DensityEstimate, KernelSpec, WeightedSample,
};
use crate::math::{log1m_sigmoid, log_sigmoid, sigmoid};
use crate::network::WeightedNetwork;
use crate::simulate::ParametricFamily;

use super::{BlockWeights, FitConfig, FitError, Responsibilities, WeightMode};

/// Bound on `|theta_k|`; complete or empty blocks would otherwise diverge.
pub const THETA_CAP: f64 = 15.0;

const EMPTY_BLOCK_MASS: f64 = 1e-8;
const THETA_GRAD_TOL: f64 = 1e-8;
const THETA_MAX_ITERS: usize = 100;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// `pi_k = sum_i gamma_ik / n`.
pub fn m_step_pi(gamma: &Responsibilities) -> Vec<f64> {
    let n = gamma.n() as f64;
    gamma.column_sums().into_iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaUpdate {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Some coordinate sits on the `THETA_CAP` bound.
    pub saturated: bool,
}

/// Expected dyad and edge counts per ordered cluster pair.
struct BernoulliStats {
    k: usize,
    dyads: Vec<f64>,
    edges: Vec<f64>,
}

impl BernoulliStats {
    fn new(net: &WeightedNetwork, gamma: &Responsibilities) -> Self {
        let k = gamma.k();
        let s = gamma.column_sums();
        let mut dyads = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                dyads[a * k + b] = s[a] * s[b];
            }
        }
        for row in gamma.rows() {
            for a in 0..k {
                for b in 0..k {
                    dyads[a * k + b] -= row[a] * row[b];
                }
            }
        }
        dyads.iter_mut().for_each(|d| *d = (*d * 0.5).max(0.0));
        let mut edges = vec![0.0; k * k];
        for e in net.edges() {
            let (gi, gj) = (gamma.row(e.i), gamma.row(e.j));
            for a in 0..k {
                for b in 0..k {
                    edges[a * k + b] += 0.5 * (gi[a] * gj[b] + gi[b] * gj[a]);
                }
            }
        }
        Self { k, dyads, edges }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                let s = theta[a] + theta[b];
                let e = self.edges[a * k + b];
                let m = self.dyads[a * k + b];
                total += e * log_sigmoid(s) + (m - e) * log1m_sigmoid(s);
            }
        }
        total
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let p = sigmoid(theta[a] + theta[b]);
                let m = self.dyads[a * k + b];
                grad[a] += 2.0 * (self.edges[a * k + b] - m * p);
                let w = m * p * (1.0 - p);
                hess[(a, a)] -= 2.0 * w;
                hess[(a, b)] -= 2.0 * w;
            }
        }
        (grad, hess)
    }
}

fn project(theta: &mut [f64]) {
    for t in theta.iter_mut() {
        *t = t.clamp(-THETA_CAP, THETA_CAP);
    }
}

/// Damped Newton ascent with Armijo backtracking on the Bernoulli part of the ELBO,
/// `sum_{i<j} sum_kl gamma_ik gamma_jl [e_ij ln p_kl + (1 - e_ij) ln(1 - p_kl)]`.
/// The objective at the result is never below its value at `theta_init`.
pub fn m_step_theta(
    net: &WeightedNetwork,
    gamma: &Responsibilities,
    theta_init: &[f64],
) -> Result<ThetaUpdate, FitError> {
    if gamma.n() != net.node_count() || theta_init.len() != gamma.k() {
        return Err(FitError::ShapeMismatch(format!(
            "gamma is {} x {}, theta has {} entries",
            gamma.n(),
            gamma.k(),
            theta_init.len()
        )));
    }
    if theta_init.iter().any(|t| !t.is_finite()) {
        return Err(FitError::NonFiniteTheta);
    }
    let stats = BernoulliStats::new(net, gamma);
    let mut theta = theta_init.to_vec();
    project(&mut theta);
    let mut value = stats.objective(&theta);
    let mut iterations = 0;
    let (mut grad, mut hess) = stats.gradient_hessian(&theta);
    while iterations < THETA_MAX_ITERS && grad.norm() > THETA_GRAD_TOL {
        iterations += 1;
        let direction = damped_direction(&hess, &grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut candidate: Vec<f64> = theta.iter().zip(direction.iter()).map(|(t, d)| t + step * d).collect();
            project(&mut candidate);
            let moved: f64 = candidate.iter().zip(&theta).zip(grad.iter()).map(|((c, t), g)| (c - t) * g).sum();
            let v = stats.objective(&candidate);
            if v.is_finite() && v >= value + ARMIJO_C * moved && v >= value {
                accepted = Some((candidate, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        if next == theta {
            break;
        }
        theta = next;
        value = v;
        (grad, hess) = stats.gradient_hessian(&theta);
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(FitError::NonFiniteTheta);
    }
    let saturated = theta.iter().any(|t| t.abs() >= THETA_CAP);
    if saturated {
        warn!("theta reached the cap |theta| = {THETA_CAP}: {theta:?}");
    }
    Ok(ThetaUpdate { theta, iterations, gradient_norm: grad.norm(), saturated })
}

/// Solves `(-H + tau I) d = g`, starting from `tau = 1e-6` and doubling until
/// the Cholesky factorization succeeds.
fn damped_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let neg = -hess;
    let mut tau = 1e-6;
    loop {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += tau;
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        tau *= 2.0;
        if !tau.is_finite() {
            return grad.clone();
        }
    }
}

/// Shared pieces of the weight M-step that do not depend on `gamma`.
pub(crate) struct WeightContext {
    mode: WeightMode,
    degree: usize,
    grid: Vec<f64>,
    pooled_bandwidth: f64,
    pooled_density: Option<DensityEstimate>,
    pooled_params: Option<(f64, f64)>,
    values: Vec<f64>,
}

impl WeightContext {
    pub fn new(net: &WeightedNetwork, config: &FitConfig) -> Result<Self, FitError> {
        let mode = config.weight_mode;
        let values: Vec<f64> = net.weights().collect();
        let mut ctx = Self {
            mode,
            degree: config.density_degree,
            grid: Vec::new(),
            pooled_bandwidth: 0.0,
            pooled_density: None,
            pooled_params: None,
            values,
        };
        if mode == WeightMode::Binary {
            return Ok(ctx);
        }
        if ctx.values.is_empty() {
            return Err(FitError::InvalidConfig(format!("weight mode {mode} needs at least one edge")));
        }
        let unit = vec![1.0; ctx.values.len()];
        match mode {
            WeightMode::Nonparametric => {
                let (grid, h0) = pooled_grid(&ctx.values, config.density_grid_size)?;
                let sample = WeightedSample::new(ctx.values.clone(), unit)?;
                let kernel = KernelSpec::gaussian(h0)?;
                ctx.pooled_density = Some(fit_local_density(&sample, &grid, &kernel, ctx.degree)?);
                ctx.grid = grid;
                ctx.pooled_bandwidth = h0;
            }
            WeightMode::Normal | WeightMode::Gamma => {
                let family = mode.family().expect("parametric mode");
                if family == ParametricFamily::Gamma && ctx.values.iter().any(|&w| w <= 0.0) {
                    return Err(FitError::InvalidConfig("gamma weight mode needs strictly positive weights".into()));
                }
                ctx.pooled_params = Some(moment_fit(family, &ctx.values, &unit)?);
            }
            WeightMode::Binary => unreachable!(),
        }
        Ok(ctx)
    }
}

/// Weighted moment estimates: `(mean, sd)` for Normal (the weighted MLE) and
/// `(mean^2 / var, mean / var)` as `(shape, rate)` for Gamma.
fn moment_fit(family: ParametricFamily, values: &[f64], masses: &[f64]) -> Result<(f64, f64), FitError> {
    let total: f64 = masses.iter().sum();
    let mean = values.iter().zip(masses).map(|(w, m)| w * m).sum::<f64>() / total;
    let var = values.iter().zip(masses).map(|(w, m)| m * (w - mean).powi(2)).sum::<f64>() / total;
    match family {
        ParametricFamily::Normal => Ok((mean, var.sqrt().max(1e-8))),
        ParametricFamily::Gamma => {
            if !(mean > 0.0) {
                return Err(FitError::InvalidConfig(format!("gamma moment fit needs a positive mean, got {mean}")));
            }
            let var = var.max(1e-12 * mean * mean);
            Ok((mean * mean / var, mean / var))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    pub weights: BlockWeights,
    /// Block pairs whose mass fell below `1e-8` and received the pooled estimate.
    pub empty_blocks: Vec<(usize, usize)>,
    /// Density grid points that fell back to the kernel estimate.
    pub flagged_grid_points: usize,
}

/// Re-estimates the block weight model from responsibility-weighted edge weights.
///
/// Edge `(i, j)` enters block `(k, l)` with mass `gamma_ik gamma_jl + gamma_il gamma_jk`
/// for `k != l` and `gamma_ik gamma_jk` for `k = l`.
pub fn m_step_weights(
    net: &WeightedNetwork,
    gamma: &Responsibilities,
    config: &FitConfig,
) -> Result<WeightUpdate, FitError> {
    if gamma.n() != net.node_count() || gamma.k() != config.k {
        return Err(FitError::ShapeMismatch(format!(
            "gamma is {} x {}, expected {} x {}",
            gamma.n(),
            gamma.k(),
            net.node_count(),
            config.k
        )));
    }
    let ctx = WeightContext::new(net, config)?;
    m_step_weights_with(net, gamma, &ctx)
}

pub(crate) fn m_step_weights_with(
    net: &WeightedNetwork,
    gamma: &Responsibilities,
    ctx: &WeightContext,
) -> Result<WeightUpdate, FitError> {
    let k = gamma.k();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let block_masses = |a: usize, b: usize| -> Vec<f64> {
        net.edges()
            .iter()
            .map(|e| {
                let (gi, gj) = (gamma.row(e.i), gamma.row(e.j));
                if a == b {
                    gi[a] * gj[a]
                } else {
                    gi[a] * gj[b] + gi[b] * gj[a]
                }
            })
            .collect()
    };

    match ctx.mode {
        WeightMode::Binary => {
            Ok(WeightUpdate { weights: BlockWeights::Binary, empty_blocks: Vec::new(), flagged_grid_points: 0 })
        }
        WeightMode::Nonparametric => {
            let pooled = ctx.pooled_density.as_ref().expect("context built for nonparametric mode");
            let fits: Vec<(DensityEstimate, bool)> = pairs
                .par_iter()
                .map(|&(a, b)| {
                    let masses = block_masses(a, b);
                    if masses.iter().sum::<f64>() < EMPTY_BLOCK_MASS {
                        return Ok((pooled.clone(), true));
                    }
                    let sample = WeightedSample::new(ctx.values.clone(), masses)?;
                    let h = match select_bandwidth(&sample) {
                        Ok(h) => h,
                        Err(DensityError::DegenerateSample) => ctx.pooled_bandwidth,
                        Err(e) => return Err(e),
                    };
                    let kernel = KernelSpec::gaussian(h)?;
                    Ok((fit_local_density(&sample, &ctx.grid, &kernel, ctx.degree)?, false))
                })
                .collect::<Result<_, DensityError>>()?;
            let empty_blocks = pairs.iter().zip(&fits).filter(|(_, f)| f.1).map(|(&p, _)| p).collect();
            let flagged_grid_points = fits.iter().filter(|f| !f.1).map(|f| f.0.flagged.len()).sum();
            let table =
                BlockTable::from_upper(k, fits.into_iter().map(|f| f.0).collect()).expect("one estimate per pair");
            Ok(WeightUpdate { weights: BlockWeights::Nonparametric(table), empty_blocks, flagged_grid_points })
        }
        WeightMode::Normal | WeightMode::Gamma => {
            let family = ctx.mode.family().expect("parametric mode");
            let pooled = ctx.pooled_params.expect("context built for parametric mode");
            let mut empty_blocks = Vec::new();
            let mut params = Vec::with_capacity(pairs.len());
            for &(a, b) in &pairs {
                let masses = block_masses(a, b);
                if masses.iter().sum::<f64>() < EMPTY_BLOCK_MASS {
                    empty_blocks.push((a, b));
                    params.push(pooled);
                } else {
                    params.push(moment_fit(family, &ctx.values, &masses)?);
                }
            }
            let table = BlockTable::from_upper(k, params).expect("one estimate per pair");
            Ok(WeightUpdate { weights: BlockWeights::Parametric(family, table), empty_blocks, flagged_grid_points: 0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_is_column_mean() {
        let g = Responsibilities::from_rows(&vec![vec![0.3, 0.7]; 10]).unwrap();
        let pi = m_step_pi(&g);
        assert!((pi[0] - 0.3).abs() < 1e-15 && (pi[1] - 0.7).abs() < 1e-15);
        let one_hot = Responsibilities::from_rows(&vec![vec![1.0, 0.0]; 4]).unwrap();
        assert_eq!(m_step_pi(&one_hot), vec![1.0, 0.0]);
    }

    #[test]
    fn single_cluster_theta_has_closed_form() {
        let net = WeightedNetwork::new(3, [(0, 1, 1.0)]).unwrap();
        let g = Responsibilities::uniform(3, 1);
        let up = m_step_theta(&net, &g, &[0.0]).unwrap();
        let expected = 0.5 * (1.0f64 / 3.0 / (2.0 / 3.0)).ln();
        assert!((up.theta[0] - expected).abs() < 1e-8, "{:?}", up.theta);
        assert!(up.gradient_norm <= 1e-8);
    }

    #[test]
    fn complete_graph_saturates() {
        let triples: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j, 1.0))).collect();
        let net = WeightedNetwork::new(5, triples).unwrap();
        let g = Responsibilities::uniform(5, 1);
        let up = m_step_theta(&net, &g, &[0.0]).unwrap();
        assert!(up.theta[0] > 9.0, "{:?}", up.theta);
        let capped = m_step_theta(&net, &g, &[40.0]).unwrap();
        assert!(capped.saturated);
        assert_eq!(capped.theta, vec![THETA_CAP]);
    }

    #[test]
    fn normal_mode_matches_weighted_mle_under_hard_labels() {
        let net = WeightedNetwork::new(4, [(0, 1, 1.0), (0, 2, 5.0), (1, 3, 7.0), (2, 3, -2.0), (0, 3, 3.0)]).unwrap();
        let gamma =
            Responsibilities::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let cfg = FitConfig { weight_mode: WeightMode::Normal, ..FitConfig::with_k(2) };
        let up = m_step_weights(&net, &gamma, &cfg).unwrap();
        let BlockWeights::Parametric(_, t) = up.weights else { panic!("parametric") };
        // block (0,1) holds weights 5, 7, 3
        let (m, s) = *t.get(0, 1);
        assert!((m - 5.0).abs() < 1e-12);
        assert!((s - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // block (1,1) holds the single weight -2
        assert!((t.get(1, 1).0 + 2.0).abs() < 1e-12);
    }
}
