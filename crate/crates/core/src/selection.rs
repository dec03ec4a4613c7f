//! Choosing the number of clusters with a modified integrated classification
//! likelihood: the complete-data log-likelihood at the hard labels minus
//! `(K - 1) ln n + K ln(n (n - 1) / 2)`.
//!
//! Nonparametric densities are not charged any extra complexity. In binary
//! mode the complete log-likelihood has no density term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::WeightedNetwork;
use crate::variational::{complete_loglik, fit, FitConfig, FitError, FitResult};

/// `(K - 1) ln n + K ln(n (n - 1) / 2)`.
pub fn icl_penalty(n: usize, k: usize) -> f64 {
    let n = n as f64;
    (k as f64 - 1.0) * n.ln() + k as f64 * (n * (n - 1.0) / 2.0).ln()
}

pub fn icl(net: &WeightedNetwork, fit: &FitResult) -> Result<f64, FitError> {
    let ll = complete_loglik(net, &fit.hard_labels, &fit.params)?;
    Ok(ll - icl_penalty(net.node_count(), fit.params.k()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclEntry {
    #[serde(rename = "K")]
    pub k: usize,
    pub icl: Option<f64>,
    pub final_elbo: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclReport {
    pub per_k: Vec<IclEntry>,
    /// Largest ICL among converged fits; smaller `K` wins ties.
    pub best_k: Option<usize>,
}

impl IclReport {
    pub fn from_entries(mut per_k: Vec<IclEntry>) -> Self {
        per_k.sort_by_key(|e| e.k);
        let mut best: Option<(usize, f64)> = None;
        for e in per_k.iter().filter(|e| e.converged) {
            if let Some(v) = e.icl {
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((e.k, v));
                }
            }
        }
        Self { per_k, best_k: best.map(|b| b.0) }
    }
}

/// Fits every `K` in `ks` with the same seed and settings and scores each fit.
/// Fit failures are recorded in the entry instead of aborting the sweep.
/// Returns the report together with the successful fits, ordered by `K`.
pub fn select_k_with_fits(
    net: &WeightedNetwork,
    ks: &[usize],
    config: &FitConfig,
) -> Result<(IclReport, Vec<FitResult>), FitError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(FitError::InvalidConfig("K range must be non-empty with every K >= 1".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let outcomes: Vec<(IclEntry, Option<FitResult>)> = ks
        .par_iter()
        .map(|&k| {
            let cfg = FitConfig { k, ..config.clone() };
            match fit(net, &cfg) {
                Ok(res) => (
                    IclEntry {
                        k,
                        icl: res.icl,
                        final_elbo: Some(res.final_elbo()),
                        converged: res.converged,
                        error: None,
                    },
                    Some(res),
                ),
                Err(e) => {
                    (IclEntry { k, icl: None, final_elbo: None, converged: false, error: Some(e.to_string()) }, None)
                }
            }
        })
        .collect();
    let (entries, fits): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok((IclReport::from_entries(entries), fits.into_iter().flatten().collect()))
}

pub fn select_k(net: &WeightedNetwork, ks: &[usize], config: &FitConfig) -> Result<IclReport, FitError> {
    select_k_with_fits(net, ks, config).map(|(report, _)| report)
}
