//! Generative sampler for planted weighted networks.
//!
//! Sampling runs in three stages: memberships from a categorical with
//! probabilities `pi`, Bernoulli edges with `p_kl = logistic(theta_k + theta_l)`,
//! then one weight per present edge from the block's weight distribution.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with the configured seed.
//! Memberships use stream 0 and edges/weights use stream 1, so outputs are
//! bit-reproducible for a given `(seed, n, K)`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::blocks::BlockTable;
use crate::math::sigmoid;
use crate::network::{Labels, NetworkError, WeightedNetwork};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("pi is not a probability vector: {0:?}")]
    InvalidSimplex(Vec<f64>),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A parametric weight family. Normal takes `(mean, sd)`; Gamma takes
/// `(shape, rate)` with density `rate^shape w^(shape-1) e^(-rate w) / Gamma(shape)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParametricFamily {
    Normal,
    Gamma,
}

impl ParametricFamily {
    pub fn validate(self, (p1, p2): (f64, f64)) -> bool {
        match self {
            Self::Normal => p1.is_finite() && p2.is_finite() && p2 > 0.0,
            Self::Gamma => p1.is_finite() && p2.is_finite() && p1 > 0.0 && p2 > 0.0,
        }
    }

    pub fn log_pdf(self, (p1, p2): (f64, f64), w: f64) -> f64 {
        match self {
            Self::Normal => {
                let z = (w - p1) / p2;
                -0.5 * z * z - p2.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Self::Gamma => {
                if w <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    p1 * p2.ln() + (p1 - 1.0) * w.ln() - p2 * w - ln_gamma(p1)
                }
            }
        }
    }

    pub fn pdf(self, params: (f64, f64), w: f64) -> f64 {
        self.log_pdf(params, w).exp()
    }

    pub fn sample<R: Rng + ?Sized>(self, (p1, p2): (f64, f64), rng: &mut R) -> f64 {
        match self {
            Self::Normal => Normal::new(p1, p2).expect("validated normal params").sample(rng),
            Self::Gamma => Gamma::new(p1, 1.0 / p2).expect("validated gamma params").sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Normal,
    Gamma,
    None,
}

impl WeightKind {
    pub fn family(self) -> Option<ParametricFamily> {
        match self {
            Self::Normal => Some(ParametricFamily::Normal),
            Self::Gamma => Some(ParametricFamily::Gamma),
            Self::None => None,
        }
    }
}

/// True block-conditional weight distributions used for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub kind: WeightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_params: Option<BlockTable<(f64, f64)>>,
}

impl WeightModel {
    pub fn none() -> Self {
        Self { kind: WeightKind::None, block_params: None }
    }

    pub fn parametric(family: ParametricFamily, params: BlockTable<(f64, f64)>) -> Result<Self, SimError> {
        if let Some(((k, l), p)) = params.iter().find(|(_, &p)| !family.validate(p)) {
            return Err(SimError::InvalidConfig(format!("block ({k}, {l}) parameters {p:?} invalid for {family:?}")));
        }
        let kind = match family {
            ParametricFamily::Normal => WeightKind::Normal,
            ParametricFamily::Gamma => WeightKind::Gamma,
        };
        Ok(Self { kind, block_params: Some(params) })
    }

    /// Normal blocks with mean `k + l - (K - 1)` and unit sd; for `K = 2` the
    /// means of blocks (1,1), (1,2), (2,2) are -1, 0, 1.
    pub fn default_normal(k: usize) -> Self {
        let table = BlockTable::from_fn(k, |a, b| ((a + b) as f64 - (k as f64 - 1.0), 1.0));
        Self { kind: WeightKind::Normal, block_params: Some(table) }
    }

    /// Gamma `(shape, rate)` blocks (2, 1.2), (8, 2.9), (20, 4.7). Only `K = 2`.
    pub fn default_gamma() -> Self {
        let table =
            BlockTable::from_upper(2, vec![(2.0, 1.2), (8.0, 2.9), (20.0, 4.7)]).expect("three entries for K = 2");
        Self { kind: WeightKind::Gamma, block_params: Some(table) }
    }

    /// Density of block `(k, l)` at `w`, or `None` for binary models.
    pub fn pdf(&self, k: usize, l: usize, w: f64) -> Option<f64> {
        let family = self.kind.family()?;
        let params = self.block_params.as_ref()?;
        Some(family.pdf(*params.get(k, l), w))
    }

    fn validate(&self, k: usize) -> Result<(), SimError> {
        match (self.kind.family(), &self.block_params) {
            (None, _) => Ok(()),
            (Some(_), None) => Err(SimError::InvalidConfig("missing block parameters".into())),
            (Some(family), Some(table)) => {
                if table.k() != k {
                    return Err(SimError::InvalidConfig(format!(
                        "block parameter table is for K = {}, expected {k}",
                        table.k()
                    )));
                }
                Self::parametric(family, table.clone()).map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub k: usize,
    pub pi: Vec<f64>,
    pub theta: Vec<f64>,
    pub weight_model: WeightModel,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.k == 0 {
            return Err(SimError::InvalidConfig("K must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(SimError::InvalidConfig("n must be at least 2".into()));
        }
        let sum: f64 = self.pi.iter().sum();
        if self.pi.len() != self.k || self.pi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-9
        {
            return Err(SimError::InvalidSimplex(self.pi.clone()));
        }
        if self.theta.len() != self.k || self.theta.iter().any(|t| !t.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "theta must hold {} finite values, got {:?}",
                self.k, self.theta
            )));
        }
        self.weight_model.validate(self.k)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// `logistic(theta_k + theta_l)`.
pub fn edge_probability(theta: &[f64], k: usize, l: usize) -> f64 {
    sigmoid(theta[k] + theta[l])
}

pub fn sample_memberships(cfg: &GeneratorConfig) -> Result<Labels, SimError> {
    cfg.validate()?;
    let dist = WeightedIndex::new(&cfg.pi).map_err(|_| SimError::InvalidSimplex(cfg.pi.clone()))?;
    let mut rng = cfg.rng(0);
    let z = (0..cfg.n).map(|_| dist.sample(&mut rng)).collect();
    Ok(Labels::new(z, cfg.k)?)
}

/// Samples edges dyad by dyad in `(i, j)` lexicographic order, drawing a
/// weight right after each present edge. Binary models record weight 0.
pub fn sample_network(labels: &Labels, cfg: &GeneratorConfig) -> Result<WeightedNetwork, SimError> {
    cfg.validate()?;
    if labels.len() != cfg.n || labels.k() != cfg.k {
        return Err(SimError::InvalidConfig(format!(
            "labels have n = {}, K = {}; config has n = {}, K = {}",
            labels.len(),
            labels.k(),
            cfg.n,
            cfg.k
        )));
    }
    let probs = BlockTable::from_fn(cfg.k, |a, b| edge_probability(&cfg.theta, a, b));
    let family = cfg.weight_model.kind.family();
    let z = labels.as_slice();
    let mut rng = cfg.rng(1);
    let mut triples = Vec::new();
    for i in 0..cfg.n {
        for j in (i + 1)..cfg.n {
            let (a, b) = (z[i], z[j]);
            if rng.gen::<f64>() < *probs.get(a, b) {
                let w = match (family, &cfg.weight_model.block_params) {
                    (Some(f), Some(params)) => f.sample(*params.get(a, b), &mut rng),
                    _ => 0.0,
                };
                triples.push((i, j, w));
            }
        }
    }
    Ok(WeightedNetwork::new(cfg.n, triples)?)
}

/// Memberships followed by the network, as one call.
pub fn simulate(cfg: &GeneratorConfig) -> Result<(Labels, WeightedNetwork), SimError> {
    let labels = sample_memberships(cfg)?;
    let net = sample_network(&labels, cfg)?;
    Ok((labels, net))
}
