//! Clustering of weighted networks with a block model whose edge weights
//! follow nonparametric block densities, fitted by variational EM.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] holds the graph and label types.
//! * [`simulate`] draws planted networks.
//! * [`density`] implements the weighted local likelihood density estimator.
//! * [`variational`] holds the ELBO, the minorize-maximize E-step, the M-steps and the fitting loop.
//! * [`selection`] chooses `K` by the modified ICL.
//! * [`metrics`] scores fits against a known truth.
//! * [`cli`] backs the `npwnet` binary.

pub mod blocks;
pub mod cli;
pub mod density;
pub mod math;
pub mod metrics;
pub mod network;
pub mod selection;
pub mod simulate;
pub mod variational;

pub use blocks::BlockTable;
pub use density::{DensityError, DensityEstimate};
pub use network::{Labels, NetworkError, WeightedNetwork};
pub use simulate::{GeneratorConfig, SimError, WeightModel};
pub use variational::{FitConfig, FitError, FitResult, ModelParams, Responsibilities, WeightMode};
