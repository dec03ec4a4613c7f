use rayon::prelude::*;

use crate::network::WeightedNetwork;

use super::qp::solve_node_qp_with_floor;
use super::terms::{node_coefficients, DyadTerms};
use super::{FitError, ModelParams, Responsibilities, GAMMA_FLOOR};

/// Runs `inner_iters` minorize-maximize sweeps over all nodes.
///
/// Each sweep freezes the current responsibilities, builds the separable
/// quadratic minorizer and maximizes it node by node on
/// `{gamma_i >= GAMMA_FLOOR, sum_k gamma_ik = 1}`. Because the minorizer touches
/// the ELBO at the frozen point, no sweep can lower the ELBO.
pub fn e_step(
    net: &WeightedNetwork,
    gamma_prev: &Responsibilities,
    params: &ModelParams,
    inner_iters: usize,
) -> Result<Responsibilities, FitError> {
    params.validate()?;
    if gamma_prev.n() != net.node_count() || gamma_prev.k() != params.k() {
        return Err(FitError::ShapeMismatch(format!(
            "gamma is {} x {}, expected {} x {}",
            gamma_prev.n(),
            gamma_prev.k(),
            net.node_count(),
            params.k()
        )));
    }
    let terms = DyadTerms::new(net, params);
    e_step_with(net, gamma_prev, params, &terms, inner_iters)
}

pub(crate) fn e_step_with(
    net: &WeightedNetwork,
    gamma_prev: &Responsibilities,
    params: &ModelParams,
    terms: &DyadTerms,
    inner_iters: usize,
) -> Result<Responsibilities, FitError> {
    let k = gamma_prev.k();
    let n = gamma_prev.n();
    if k == 1 {
        return Ok(Responsibilities::from_raw(n, 1, vec![1.0; n]));
    }
    let mut gamma = if gamma_prev.as_slice().iter().all(|&g| g >= GAMMA_FLOOR) {
        gamma_prev.clone()
    } else {
        gamma_prev.clamped(GAMMA_FLOOR)
    };
    for _ in 0..inner_iters {
        let (a, b) = node_coefficients(net, &gamma, params, terms);
        let rows: Vec<Vec<f64>> = a
            .par_chunks(k)
            .zip(b.par_chunks(k))
            .map(|(a, b)| solve_node_qp_with_floor(a, b, GAMMA_FLOOR))
            .collect::<Result<_, _>>()?;
        gamma = Responsibilities::from_raw(n, k, rows.concat());
    }
    Ok(gamma)
}
