use crate::math::log_sum_exp;
use crate::network::WeightedNetwork;

use super::terms::DyadTerms;
use super::{FitError, ModelParams};

/// Largest number of label configurations `K^n` that will be enumerated.
pub const MAX_ENUMERATION: usize = 1_000_000;

/// Exact marginal log-likelihood `ln sum_z P(Y | z) P(z)` by enumerating every
/// labeling. Uses the same per-dyad log terms as the ELBO.
pub fn exact_loglik_small(net: &WeightedNetwork, params: &ModelParams) -> Result<f64, FitError> {
    params.validate()?;
    let n = net.node_count();
    let k = params.k();
    let too_large = FitError::TooLargeToEnumerate { n, k };
    let count = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&c| c <= MAX_ENUMERATION));
    let count = count.ok_or(too_large)?;

    let terms = DyadTerms::new(net, params);
    // dense per-dyad lookup: edge index or none
    let mut edge_at = vec![None; n * n];
    for (idx, e) in net.edges().iter().enumerate() {
        edge_at[e.i * n + e.j] = Some(idx);
    }
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();

    let mut z = vec![0usize; n];
    let mut logs = Vec::with_capacity(count);
    for code in 0..count {
        let mut c = code;
        for slot in z.iter_mut() {
            *slot = c % k;
            c /= k;
        }
        let mut total: f64 = z.iter().map(|&a| log_pi[a]).sum();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (z[i], z[j]);
                total += match edge_at[i * n + j] {
                    Some(e) => terms.edge_row(e)[a * k + b],
                    None => terms.non_edge[a * k + b],
                };
            }
        }
        logs.push(total);
    }
    Ok(log_sum_exp(&logs))
}
