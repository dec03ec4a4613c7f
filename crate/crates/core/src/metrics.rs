//! Scores for comparing a fit with a known truth, plus descriptive moment
//! statistics of weight samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockTable;
use crate::density::{evaluate_density, DensityEstimate};
use crate::math::for_each_permutation;
use crate::network::Labels;

/// Reported log-RASE when the estimate matches the truth exactly: `ln(1e-300) / 2`.
pub const PERFECT_LOG_RASE: f64 = -345.38776394910684;

/// Largest `K` for which `rase_theta` searches all `K!` matchings.
pub const MAX_MATCH_K: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} values")]
    TooShort(usize),
    #[error("K = {0} is too large for exhaustive matching")]
    KTooLargeForExactMatch(usize),
    #[error("sample has zero variance")]
    DegenerateSample,
}

/// Fraction of node pairs on which the two partitions agree about
/// co-membership.
pub fn rand_index(z: &Labels, z_hat: &Labels) -> Result<f64, MetricsError> {
    let n = z.len();
    if z_hat.len() != n {
        return Err(MetricsError::LengthMismatch(n, z_hat.len()));
    }
    if n < 2 {
        return Err(MetricsError::TooShort(2));
    }
    let (ka, kb) = (z.k(), z_hat.k());
    let mut table = vec![0u64; ka * kb];
    for (&a, &b) in z.as_slice().iter().zip(z_hat.as_slice()) {
        table[a * kb + b] += 1;
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let both: u64 = table.iter().map(|&c| pairs(c)).sum();
    let rows: u64 = (0..ka).map(|a| pairs(table[a * kb..(a + 1) * kb].iter().sum())).sum();
    let cols: u64 = (0..kb).map(|b| pairs((0..ka).map(|a| table[a * kb + b]).sum())).sum();
    let total = pairs(n as u64);
    // pairs split in both partitions plus pairs joined in both
    let agree = total + 2 * both - rows - cols;
    Ok(agree as f64 / total as f64)
}

pub fn log_rand_index(z: &Labels, z_hat: &Labels) -> Result<f64, MetricsError> {
    rand_index(z, z_hat).map(f64::ln)
}

/// `ln sqrt(mean_k (theta_hat_{s(k)} - theta_k)^2)` minimized over cluster
/// matchings `s`. An exact match returns [`PERFECT_LOG_RASE`].
pub fn rase_theta(theta_hat: &[f64], theta_true: &[f64]) -> Result<f64, MetricsError> {
    let k = theta_true.len();
    if theta_hat.len() != k {
        return Err(MetricsError::LengthMismatch(theta_hat.len(), k));
    }
    if k == 0 {
        return Err(MetricsError::TooShort(1));
    }
    if k > MAX_MATCH_K {
        return Err(MetricsError::KTooLargeForExactMatch(k));
    }
    Ok(0.5 * min_mean_squared_error(theta_hat, theta_true).max(1e-300).ln())
}

/// Matching of estimated to true clusters minimizing the squared theta error:
/// estimated cluster `perm[k]` corresponds to true cluster `k`.
pub fn best_theta_matching(theta_hat: &[f64], theta_true: &[f64]) -> Vec<usize> {
    let mut best = (f64::INFINITY, (0..theta_true.len()).collect::<Vec<_>>());
    for_each_permutation(theta_true.len(), |perm| {
        let err = squared_error(theta_hat, theta_true, perm);
        if err < best.0 {
            best = (err, perm.to_vec());
        }
    });
    best.1
}

fn squared_error(theta_hat: &[f64], theta_true: &[f64], perm: &[usize]) -> f64 {
    perm.iter().zip(theta_true).map(|(&p, t)| (theta_hat[p] - t).powi(2)).sum::<f64>() / theta_true.len() as f64
}

fn min_mean_squared_error(theta_hat: &[f64], theta_true: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for_each_permutation(theta_true.len(), |perm| {
        best = best.min(squared_error(theta_hat, theta_true, perm));
    });
    best
}

/// Matching of estimated to true clusters maximizing label agreement:
/// estimated cluster `perm[a]` corresponds to true cluster `a`. Both
/// labelings must use `k` clusters.
pub fn best_label_matching(z: &Labels, z_hat: &Labels, k: usize) -> Result<Vec<usize>, MetricsError> {
    if z_hat.len() != z.len() {
        return Err(MetricsError::LengthMismatch(z.len(), z_hat.len()));
    }
    if k > MAX_MATCH_K {
        return Err(MetricsError::KTooLargeForExactMatch(k));
    }
    let mut counts = vec![0usize; k * k];
    for (&a, &b) in z.as_slice().iter().zip(z_hat.as_slice()) {
        if a < k && b < k {
            counts[a * k + b] += 1;
        }
    }
    let mut best = (0usize, (0..k).collect::<Vec<_>>());
    let mut first = true;
    for_each_permutation(k, |perm| {
        let agree: usize = perm.iter().enumerate().map(|(a, &b)| counts[a * k + b]).sum();
        if first || agree > best.0 {
            best = (agree, perm.to_vec());
            first = false;
        }
    });
    Ok(best.1)
}

/// `sup_w |f_hat(w) - f(w)|` over the estimate's grid refined four times.
pub fn ks_statistic(est: &DensityEstimate, true_density: impl Fn(f64) -> f64) -> f64 {
    let mut sup: f64 = 0.0;
    let mut check = |w: f64| sup = sup.max((evaluate_density(est, w) - true_density(w)).abs());
    for pair in est.grid.windows(2) {
        for step in 0..4 {
            check(pair[0] + (pair[1] - pair[0]) * step as f64 / 4.0);
        }
    }
    check(*est.grid.last().expect("grid is non-empty"));
    sup
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub skewness: f64,
    /// Non-excess kurtosis, 3 for a normal distribution.
    pub kurtosis: f64,
}

/// Moment skewness `m3 / m2^1.5` and kurtosis `m4 / m2^2`.
pub fn descriptive_stats(weights: &[f64]) -> Result<Descriptive, MetricsError> {
    if weights.len() < 3 {
        return Err(MetricsError::TooShort(3));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let moment = |p: i32| weights.iter().map(|w| (w - mean).powi(p)).sum::<f64>() / n;
    let m2 = moment(2);
    if !(m2 > 0.0) {
        return Err(MetricsError::DegenerateSample);
    }
    Ok(Descriptive { skewness: moment(3) / m2.powf(1.5), kurtosis: moment(4) / (m2 * m2) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub log_ri: Option<f64>,
    pub log_rase_theta: Option<f64>,
    /// KS per unordered block pair, keyed by true cluster indices.
    pub ks_per_block: Option<BlockTable<f64>>,
    pub descriptive: Option<Descriptive>,
    /// Moments of the weights inside each block of the fitted partition;
    /// `None` for blocks with too few or constant weights.
    #[serde(default)]
    pub descriptive_per_block: Option<BlockTable<Option<Descriptive>>>,
}

impl MetricReport {
    /// Flat `(metric, value)` pairs, as written to `metrics.csv` and `bench.csv`.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        if let Some(v) = self.log_ri {
            rows.push(("log_ri".to_string(), v));
        }
        if let Some(v) = self.log_rase_theta {
            rows.push(("log_rase_theta".to_string(), v));
        }
        if let Some(ks) = &self.ks_per_block {
            rows.extend(ks.iter().map(|((a, b), v)| (format!("ks_{a}_{b}"), *v)));
        }
        if let Some(d) = self.descriptive {
            rows.push(("skewness".to_string(), d.skewness));
            rows.push(("kurtosis".to_string(), d.kurtosis));
        }
        if let Some(blocks) = &self.descriptive_per_block {
            for ((a, b), d) in blocks.iter() {
                if let Some(d) = d {
                    rows.push((format!("skewness_{a}_{b}"), d.skewness));
                    rows.push((format!("kurtosis_{a}_{b}"), d.kurtosis));
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(z: &[usize]) -> Labels {
        Labels::from_assignments(z.to_vec())
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&labels(&[0, 0, 1]), &labels(&[0, 0, 1])).unwrap(), 1.0);
        assert!((rand_index(&labels(&[0, 0, 1]), &labels(&[0, 1, 1])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(rand_index(&labels(&[0, 1]), &labels(&[0])), Err(MetricsError::LengthMismatch(2, 1))));
    }

    #[test]
    fn rase_examples() {
        let v = rase_theta(&[1.1, -0.9], &[-1.0, 1.0]).unwrap();
        assert!((v - 0.1f64.ln()).abs() < 1e-12);
        assert_eq!(rase_theta(&[1.0, -1.0], &[-1.0, 1.0]).unwrap(), PERFECT_LOG_RASE);
        assert!(matches!(rase_theta(&[0.0; 9], &[0.0; 9]), Err(MetricsError::KTooLargeForExactMatch(9))));
        assert_eq!(best_theta_matching(&[1.1, -0.9], &[-1.0, 1.0]), vec![1, 0]);
    }

    #[test]
    fn label_matching_undoes_relabeling() {
        let z = labels(&[0, 0, 1, 1, 2, 2]);
        let z_hat = labels(&[2, 2, 0, 0, 1, 1]);
        assert_eq!(best_label_matching(&z, &z_hat, 3).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn perfect_constant_is_half_log_epsilon() {
        assert_eq!(PERFECT_LOG_RASE, 0.5 * 1e-300f64.ln());
    }

    #[test]
    fn two_point_moments() {
        let d = descriptive_stats(&[-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert_eq!(d.skewness, 0.0);
        assert_eq!(d.kurtosis, 1.0);
        assert_eq!(descriptive_stats(&[2.0, 2.0, 2.0]), Err(MetricsError::DegenerateSample));
    }
}
