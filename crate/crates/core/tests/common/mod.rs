//! Helpers shared by the integration tests: random instances and
//! brute-force reference computations written independently of the library.

#![allow(dead_code)]

use npwnet::blocks::BlockTable;
use npwnet::density::DensityEstimate;
use npwnet::simulate::ParametricFamily;
use npwnet::variational::{BlockWeights, ModelParams, Responsibilities, WeightMode};
use npwnet::WeightedNetwork;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

/// Erdos-Renyi graph with edge probability `density`; weights are positive
/// when `positive` is set.
pub fn random_network<R: Rng>(rng: &mut R, n: usize, density: f64, positive: bool) -> WeightedNetwork {
    let normal = Normal::new(0.0, 1.5).unwrap();
    let mut triples = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < density {
                let w = if positive { Gamma::new(3.0, 1.0).unwrap().sample(rng) } else { normal.sample(rng) };
                triples.push((i, j, w));
            }
        }
    }
    WeightedNetwork::new(n, triples).unwrap()
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Responsibilities with rows drawn uniformly from the simplex, with every
/// entry kept above `floor`.
pub fn random_gamma<R: Rng>(rng: &mut R, n: usize, k: usize, floor: f64) -> Responsibilities {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| random_simplex(rng, k).into_iter().map(|x| (1.0 - k as f64 * floor) * x + floor).collect())
        .collect();
    Responsibilities::from_rows(&rows).unwrap()
}

/// A smooth, unnormalized tabulated density, so the excess-mass term is exercised.
pub fn random_table<R: Rng>(rng: &mut R) -> DensityEstimate {
    let grid: Vec<f64> = (0..81).map(|g| -6.0 + 0.15 * g as f64).collect();
    let (mu, sd, scale): (f64, f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.7..1.3));
    let logs = grid
        .iter()
        .map(|w: &f64| scale.ln() - 0.5 * ((w - mu) / sd).powi(2) - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .collect();
    DensityEstimate::from_table(grid, logs, 0.3, 2).unwrap()
}

pub fn random_params<R: Rng>(rng: &mut R, k: usize, mode: WeightMode) -> ModelParams {
    let theta: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let pi = random_simplex(rng, k);
    let weights = match mode {
        WeightMode::Binary => BlockWeights::Binary,
        WeightMode::Normal => BlockWeights::Parametric(
            ParametricFamily::Normal,
            BlockTable::from_fn(k, |_, _| (rng.gen_range(-2.0..2.0), rng.gen_range(0.5..2.0))),
        ),
        WeightMode::Gamma => BlockWeights::Parametric(
            ParametricFamily::Gamma,
            BlockTable::from_fn(k, |_, _| (rng.gen_range(1.0..6.0), rng.gen_range(0.5..2.0))),
        ),
        WeightMode::Nonparametric => BlockWeights::Nonparametric(BlockTable::from_fn(k, |_, _| random_table(rng))),
    };
    ModelParams::new(theta, pi, weights).unwrap()
}

/// Weight mode and whether its weights must be positive.
pub fn modes() -> [(WeightMode, bool); 4] {
    [
        (WeightMode::Nonparametric, false),
        (WeightMode::Normal, false),
        (WeightMode::Gamma, true),
        (WeightMode::Binary, false),
    ]
}

fn log_logistic(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

/// Log term of dyad `(i, j)` when `i` is in cluster `a` and `j` in `b`.
pub fn dyad_term(net: &WeightedNetwork, params: &ModelParams, i: usize, j: usize, a: usize, b: usize) -> f64 {
    let s = params.theta[a] + params.theta[b];
    match net.weight(i, j) {
        Some(w) => {
            let density = params.log_weight_density(a, b, w).map_or(0.0, |lf| lf - params.density_excess_mass(a, b));
            log_logistic(s) + density
        }
        None => log_logistic(-s),
    }
}

/// ELBO by direct summation over all pairs and cluster pairs.
pub fn brute_elbo(net: &WeightedNetwork, gamma: &Responsibilities, params: &ModelParams) -> f64 {
    let (n, k) = (gamma.n(), gamma.k());
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for a in 0..k {
                for b in 0..k {
                    total += gamma.get(i, a) * gamma.get(j, b) * dyad_term(net, params, i, j, a, b);
                }
            }
        }
        for a in 0..k {
            let g = gamma.get(i, a);
            if g > 0.0 {
                total += g * (params.pi[a].ln() - g.ln());
            }
        }
    }
    total
}

/// `ln sum_z P(Y, z)` by enumerating every labeling.
pub fn brute_loglik(net: &WeightedNetwork, params: &ModelParams) -> f64 {
    let n = net.node_count();
    let k = params.k();
    let count = k.pow(n as u32);
    let mut logs = Vec::with_capacity(count);
    for code in 0..count {
        let z: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
        let mut total: f64 = z.iter().map(|&a| params.pi[a].ln()).sum();
        for i in 0..n {
            for j in (i + 1)..n {
                total += dyad_term(net, params, i, j, z[i], z[j]);
            }
        }
        logs.push(total);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Best value of `sum a x^2 + b x` over a simplex lattice with `steps` divisions.
pub fn grid_search_qp(a: &[f64], b: &[f64], steps: usize) -> f64 {
    fn recurse(a: &[f64], b: &[f64], left: usize, steps: usize, acc: f64, best: &mut f64) {
        if a.len() == 1 {
            let x = left as f64 / steps as f64;
            *best = best.max(acc + a[0] * x * x + b[0] * x);
            return;
        }
        for m in 0..=left {
            let x = m as f64 / steps as f64;
            recurse(&a[1..], &b[1..], left - m, steps, acc + a[0] * x * x + b[0] * x, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    recurse(a, b, steps, steps, 0.0, &mut best);
    best
}

pub fn qp_value(a: &[f64], b: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(b).zip(x).map(|((a, b), x)| a * x * x + b * x).sum()
}
