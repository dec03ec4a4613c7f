use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::network::WeightedNetwork;

use super::estep::e_step_with;
use super::init::initial_responsibilities;
use super::mstep::{m_step_pi, m_step_theta, m_step_weights_with, WeightContext};
use super::terms::{elbo_with, DyadTerms};
use super::{BlockWeights, FitConfig, FitDiagnostics, FitError, FitResult, ModelParams, Responsibilities};

/// Random stream offset for restart `r`; streams 0 and 1 belong to simulation.
const RESTART_STREAM_BASE: u64 = 100;

/// Fits the model with `config.restarts` independent initializations and
/// returns the run with the highest final ELBO (earliest restart on ties).
pub fn fit(net: &WeightedNetwork, config: &FitConfig) -> Result<FitResult, FitError> {
    config.validate()?;
    if net.node_count() < config.k {
        return Err(FitError::InvalidConfig(format!("K = {} exceeds the node count {}", config.k, net.node_count())));
    }
    let ctx = WeightContext::new(net, config)?;
    let runs: Vec<Result<FitResult, FitError>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(RESTART_STREAM_BASE + r as u64);
            let gamma0 = initial_responsibilities(net, config.k, &mut rng);
            run_em(net, gamma0, config, &ctx).map(|mut res| {
                res.diagnostics.restart = r;
                res
            })
        })
        .collect();

    let restart_elbos: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(FitResult::final_elbo)).collect();
    let mut best: Option<FitResult> = None;
    let mut errors = Vec::new();
    for run in runs {
        match run {
            Ok(res) => {
                if best.as_ref().map_or(true, |b| res.final_elbo() > b.final_elbo()) {
                    best = Some(res);
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut best = best.ok_or_else(|| FitError::AllRestartsFailed(errors.join("; ")))?;
    best.diagnostics.restart_elbos = restart_elbos;
    best.icl = Some(crate::selection::icl(net, &best)?);
    Ok(best)
}

/// One EM run from the given starting responsibilities.
pub fn fit_from_responsibilities(
    net: &WeightedNetwork,
    gamma0: &Responsibilities,
    config: &FitConfig,
) -> Result<FitResult, FitError> {
    config.validate()?;
    if gamma0.n() != net.node_count() || gamma0.k() != config.k {
        return Err(FitError::ShapeMismatch(format!(
            "gamma is {} x {}, expected {} x {}",
            gamma0.n(),
            gamma0.k(),
            net.node_count(),
            config.k
        )));
    }
    let ctx = WeightContext::new(net, config)?;
    let mut res = run_em(net, gamma0.clone(), config, &ctx)?;
    res.icl = Some(crate::selection::icl(net, &res)?);
    Ok(res)
}

fn run_em(
    net: &WeightedNetwork,
    gamma0: Responsibilities,
    config: &FitConfig,
    ctx: &WeightContext,
) -> Result<FitResult, FitError> {
    let mut diagnostics = FitDiagnostics::default();
    let mut gamma = gamma0;

    let theta_up = m_step_theta(net, &gamma, &vec![0.0; config.k])?;
    let weight_up = m_step_weights_with(net, &gamma, ctx)?;
    diagnostics.theta_saturated = theta_up.saturated;
    diagnostics.empty_blocks = weight_up.empty_blocks;
    diagnostics.flagged_grid_points = weight_up.flagged_grid_points;
    let mut params = ModelParams { theta: theta_up.theta, pi: m_step_pi(&gamma), weights: weight_up.weights };
    let mut terms = DyadTerms::new(net, &params);
    let mut current = elbo_with(net, &gamma, &params, &terms);
    let mut trace = vec![current];
    let mut converged = false;

    for iter in 1..=config.max_iter {
        gamma = e_step_with(net, &gamma, &params, &terms, config.mm_inner_iters)?;
        params.pi = m_step_pi(&gamma);
        let theta_up = m_step_theta(net, &gamma, &params.theta)?;
        params.theta = theta_up.theta;
        diagnostics.theta_saturated = theta_up.saturated;
        terms = DyadTerms::new(net, &params);
        let mut value = elbo_with(net, &gamma, &params, &terms);

        if !matches!(params.weights, BlockWeights::Binary) {
            // Neither the local likelihood fit nor the Gamma moment fit is an
            // exact maximizer, so keep the new weights only if the ELBO does not drop.
            let weight_up = m_step_weights_with(net, &gamma, ctx)?;
            let candidate = ModelParams { weights: weight_up.weights, ..params.clone() };
            let candidate_terms = DyadTerms::new(net, &candidate);
            let candidate_value = elbo_with(net, &gamma, &candidate, &candidate_terms);
            if candidate_value >= value {
                params = candidate;
                terms = candidate_terms;
                value = candidate_value;
                diagnostics.empty_blocks = weight_up.empty_blocks;
                diagnostics.flagged_grid_points = weight_up.flagged_grid_points;
            } else {
                diagnostics.rejected_weight_updates += 1;
            }
        }

        trace.push(value);
        diagnostics.iterations = iter;
        let change = (value - current).abs();
        current = value;
        debug!("iteration {iter}: elbo {value}");
        if change <= config.elbo_rel_tol * value.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let hard_labels = gamma.hard_labels();
    Ok(FitResult {
        params,
        gamma,
        hard_labels,
        elbo_trace: trace,
        converged,
        icl: None,
        config: config.clone(),
        diagnostics,
    })
}
