use crate::math::{log1m_sigmoid, log_sigmoid, xlogx};
use crate::network::{Labels, WeightedNetwork};

use super::{FitError, ModelParams, Responsibilities};

/// Per-dyad log terms for a fixed parameter set.
///
/// A non-edge between clusters `(k, l)` contributes `ln(1 - p_kl)`; an edge `e`
/// contributes `ln p_kl + ln f_kl(w_e) - (int f_kl - 1)`. Both tables are full
/// `K x K` and symmetric.
pub(crate) struct DyadTerms {
    pub k: usize,
    pub non_edge: Vec<f64>,
    edge: Vec<f64>,
}

impl DyadTerms {
    pub fn new(net: &WeightedNetwork, params: &ModelParams) -> Self {
        let k = params.k();
        let mut log_p = vec![0.0; k * k];
        let mut non_edge = vec![0.0; k * k];
        let mut excess = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let s = params.theta[a] + params.theta[b];
                log_p[a * k + b] = log_sigmoid(s);
                non_edge[a * k + b] = log1m_sigmoid(s);
                excess[a * k + b] = params.density_excess_mass(a, b);
            }
        }
        let mut edge = vec![0.0; net.edge_count() * k * k];
        for (row, e) in edge.chunks_mut(k * k).zip(net.edges()) {
            for a in 0..k {
                for b in a..k {
                    let density = params.log_weight_density(a, b, e.w).map_or(0.0, |l| l - excess[a * k + b]);
                    row[a * k + b] = log_p[a * k + b] + density;
                    row[b * k + a] = row[a * k + b];
                }
            }
        }
        Self { k, non_edge, edge }
    }

    pub fn edge_row(&self, e: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.edge[e * kk..(e + 1) * kk]
    }

    /// Smallest nonnegative constant bounding the edge's log terms from above.
    pub fn shift(&self, e: usize) -> f64 {
        self.edge_row(e).iter().copied().fold(0.0, f64::max)
    }
}

fn check_shapes(net: &WeightedNetwork, gamma: &Responsibilities, params: &ModelParams) -> Result<(), FitError> {
    params.validate()?;
    if gamma.n() != net.node_count() || gamma.k() != params.k() {
        return Err(FitError::ShapeMismatch(format!(
            "gamma is {} x {}, network has {} nodes, params have K = {}",
            gamma.n(),
            gamma.k(),
            net.node_count(),
            params.k()
        )));
    }
    Ok(())
}

/// `Q_kl = sum_i gamma_ik gamma_il`.
fn self_products(gamma: &Responsibilities) -> Vec<f64> {
    let k = gamma.k();
    let mut q = vec![0.0; k * k];
    for row in gamma.rows() {
        for a in 0..k {
            for b in 0..k {
                q[a * k + b] += row[a] * row[b];
            }
        }
    }
    q
}

pub(crate) fn elbo_with(
    net: &WeightedNetwork,
    gamma: &Responsibilities,
    params: &ModelParams,
    terms: &DyadTerms,
) -> f64 {
    let k = gamma.k();
    let s = gamma.column_sums();
    let q = self_products(gamma);
    // every dyad as a non-edge, then correct the edges
    let mut dyads = 0.0;
    for a in 0..k {
        for b in 0..k {
            dyads += terms.non_edge[a * k + b] * 0.5 * (s[a] * s[b] - q[a * k + b]);
        }
    }
    for (idx, e) in net.edges().iter().enumerate() {
        let (gi, gj) = (gamma.row(e.i), gamma.row(e.j));
        let row = terms.edge_row(idx);
        for a in 0..k {
            let mut inner = 0.0;
            for b in 0..k {
                inner += gj[b] * (row[a * k + b] - terms.non_edge[a * k + b]);
            }
            dyads += gi[a] * inner;
        }
    }
    dyads + prior_and_entropy(gamma, &params.pi)
}

fn prior_and_entropy(gamma: &Responsibilities, pi: &[f64]) -> f64 {
    let mut total = 0.0;
    for row in gamma.rows() {
        for (&g, &p) in row.iter().zip(pi) {
            if g > 0.0 {
                total += g * p.ln() - xlogx(g);
            }
        }
    }
    total
}

/// Evidence lower bound of the mean-field family at `gamma`.
///
/// Sums `gamma_ik gamma_jl` times the dyad log term over all pairs `i < j` and
/// cluster pairs, plus `sum_ik gamma_ik (ln pi_k - ln gamma_ik)` with
/// `0 ln 0 = 0`.
pub fn elbo(net: &WeightedNetwork, gamma: &Responsibilities, params: &ModelParams) -> Result<f64, FitError> {
    check_shapes(net, gamma, params)?;
    let terms = DyadTerms::new(net, params);
    Ok(elbo_with(net, gamma, params, &terms))
}

/// Quadratic coefficients `(a, b)` of the separable minorizer, row-major `n x K`.
pub(crate) fn node_coefficients(
    net: &WeightedNetwork,
    gamma_hat: &Responsibilities,
    params: &ModelParams,
    terms: &DyadTerms,
) -> (Vec<f64>, Vec<f64>) {
    let k = gamma_hat.k();
    let n = gamma_hat.n();
    let s = gamma_hat.column_sums();
    let shifts: Vec<f64> = (0..net.edge_count()).map(|e| terms.shift(e)).collect();
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
    let mut a_out = vec![0.0; n * k];
    let mut b_out = vec![0.0; n * k];
    let mut rest = vec![0.0; k];
    let mut acc = vec![0.0; k];
    for i in 0..n {
        let gi = gamma_hat.row(i);
        for l in 0..k {
            rest[l] = s[l] - gi[l];
        }
        acc.iter_mut().for_each(|x| *x = 0.0);
        for &(j, e) in net.neighbors(i) {
            let gj = gamma_hat.row(j);
            let row = terms.edge_row(e);
            let c = shifts[e];
            for l in 0..k {
                rest[l] -= gj[l];
            }
            for a in 0..k {
                let mut inner = 0.0;
                for l in 0..k {
                    inner += gj[l] * (row[a * k + l] - c);
                }
                acc[a] += inner;
            }
        }
        for a in 0..k {
            let mut inner = 0.0;
            for l in 0..k {
                inner += terms.non_edge[a * k + l] * rest[l];
            }
            acc[a] += inner;
            let g = gi[a];
            a_out[i * k + a] = acc[a] / (2.0 * g) - 1.0 / g;
            b_out[i * k + a] = log_pi[a] - g.ln() + 1.0;
        }
    }
    (a_out, b_out)
}

/// Sum of the per-edge shifts, the constant part of the minorizer.
pub(crate) fn shift_total(net: &WeightedNetwork, terms: &DyadTerms) -> f64 {
    (0..net.edge_count()).map(|e| terms.shift(e)).sum()
}

/// Separable quadratic minorizer of the ELBO around `gamma_hat`, evaluated at `gamma`.
///
/// Every dyad term is first shifted to be nonpositive, using that
/// `sum_kl gamma_ik gamma_jl = 1`, then each product `gamma_ik gamma_jl` is
/// bounded by the arithmetic-geometric mean inequality and `-ln gamma_ik` by its
/// tangent at `gamma_hat`.
pub fn surrogate_q(
    net: &WeightedNetwork,
    gamma_hat: &Responsibilities,
    gamma: &Responsibilities,
    params: &ModelParams,
) -> Result<f64, FitError> {
    check_shapes(net, gamma_hat, params)?;
    check_shapes(net, gamma, params)?;
    if gamma_hat.as_slice().iter().any(|&g| !(g > 0.0)) {
        return Err(FitError::NonPositiveGammaHat);
    }
    let terms = DyadTerms::new(net, params);
    let (a, b) = node_coefficients(net, gamma_hat, params, &terms);
    let quad: f64 = gamma.as_slice().iter().zip(a.iter().zip(&b)).map(|(&g, (&a, &b))| a * g * g + b * g).sum();
    Ok(shift_total(net, &terms) + quad)
}

/// Complete-data log-likelihood at hard labels, with `pi` floored at `1e-12`.
/// Binary mode has no density term.
pub fn complete_loglik(net: &WeightedNetwork, labels: &Labels, params: &ModelParams) -> Result<f64, FitError> {
    params.validate()?;
    let k = params.k();
    if labels.len() != net.node_count() || labels.k() != k {
        return Err(FitError::ShapeMismatch(format!("labels have n = {}, K = {}", labels.len(), labels.k())));
    }
    let z = labels.as_slice();
    let sizes = labels.cluster_sizes();
    let mut non_edges = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let pairs =
                if a == b { (sizes[a] * sizes[a].saturating_sub(1) / 2) as f64 } else { (sizes[a] * sizes[b]) as f64 };
            non_edges[a * k + b] = pairs;
        }
    }
    let mut total = 0.0;
    for e in net.edges() {
        let (a, b) = (z[e.i].min(z[e.j]), z[e.i].max(z[e.j]));
        non_edges[a * k + b] -= 1.0;
        total += log_sigmoid(params.theta[a] + params.theta[b]);
        if let Some(lf) = params.log_weight_density(a, b, e.w) {
            total += lf;
        }
    }
    for a in 0..k {
        for b in a..k {
            total += non_edges[a * k + b] * log1m_sigmoid(params.theta[a] + params.theta[b]);
        }
    }
    total += z.iter().map(|&c| params.pi[c].max(1e-12).ln()).sum::<f64>();
    Ok(total)
}
