//! Mass-weighted local likelihood density estimation.
//!
//! At each fit point `w` the log-density is approximated by a polynomial
//! `zeta(u - w) = sum_m beta_m (u - w)^m` and the kernel-localized likelihood
//!
//! ```text
//! L(beta) = sum_m mass_m K_h(w_m - w) zeta(w_m - w)
//!           - M * (int_X K_h(u - w) exp(zeta(u - w)) du - 1)
//! ```
//!
//! is maximized by damped Newton, `M` being the total mass. The fitted
//! log-density at `w` is `beta_0`. `K_h` is a Gaussian kernel truncated at a
//! fixed multiple of `h`, and the integral uses 40-point Gauss-Legendre
//! quadrature over the kernel window clipped to the support `X`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::math::{trapezoid, GaussLegendre};

/// Density values below this are clamped, and it is returned outside the grid.
pub const DENSITY_FLOOR: f64 = 1e-12;

const MAX_NEWTON_ITERS: usize = 50;
const MAX_HALVINGS: usize = 30;
const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("sample needs at least two distinct values with positive mass")]
    DegenerateSample,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("polynomial degree {0} not in 0..=2")]
    InvalidDegree(usize),
    #[error("local objective is not finite")]
    NonFiniteObjective,
    #[error("local fit diverged at w = {0}")]
    LocalFitDiverged(f64),
    #[error("density integrates to zero or a non-finite value")]
    ZeroMassDensity,
}

/// Gaussian kernel with bandwidth `h`, treated as zero beyond `truncation * h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    bandwidth: f64,
    truncation: f64,
}

impl KernelSpec {
    pub const DEFAULT_TRUNCATION: f64 = 4.0;

    pub fn new(bandwidth: f64, truncation: f64) -> Result<Self, DensityError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(DensityError::InvalidKernel(format!("bandwidth {bandwidth}")));
        }
        if !(truncation >= 3.0 && truncation.is_finite()) {
            return Err(DensityError::InvalidKernel(format!("truncation {truncation}")));
        }
        Ok(Self { bandwidth, truncation })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self, DensityError> {
        Self::new(bandwidth, Self::DEFAULT_TRUNCATION)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn half_width(&self) -> f64 {
        self.truncation * self.bandwidth
    }

    pub fn eval(&self, d: f64) -> f64 {
        let t = d / self.bandwidth;
        if t.abs() > self.truncation {
            0.0
        } else {
            (-0.5 * t * t).exp() / (self.bandwidth * (2.0 * PI).sqrt())
        }
    }
}

/// Edge weights for one block pair with their responsibility masses.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl WeightedSample {
    pub fn new(values: Vec<f64>, masses: Vec<f64>) -> Result<Self, DensityError> {
        if values.len() != masses.len() {
            return Err(DensityError::InvalidSample(format!("{} values but {} masses", values.len(), masses.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DensityError::InvalidSample("non-finite value".into()));
        }
        if masses.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(DensityError::InvalidSample("masses must be finite and nonnegative".into()));
        }
        if !(masses.iter().sum::<f64>() > 0.0) {
            return Err(DensityError::InvalidSample("total mass is zero".into()));
        }
        Ok(Self { values, masses })
    }

    pub fn unit(values: Vec<f64>) -> Result<Self, DensityError> {
        let masses = vec![1.0; values.len()];
        Self::new(values, masses)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Kish effective sample size `(sum m)^2 / sum m^2`.
    pub fn effective_size(&self) -> f64 {
        let s: f64 = self.masses.iter().sum();
        let s2: f64 = self.masses.iter().map(|m| m * m).sum();
        s * s / s2
    }

    fn sorted(&self) -> SortedSample {
        let mut pairs: Vec<(f64, f64)> =
            self.values.iter().zip(&self.masses).filter(|(_, &m)| m > 0.0).map(|(&v, &m)| (v, m)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, masses) = pairs.into_iter().unzip();
        SortedSample { values, masses }
    }
}

/// Positive-mass entries sorted by value.
struct SortedSample {
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl SortedSample {
    /// Drops the observations outside `support`, where the model puts no density.
    fn within(self, support: (f64, f64)) -> Self {
        let lo = self.values.partition_point(|&v| v < support.0);
        let hi = self.values.partition_point(|&v| v <= support.1);
        Self { values: self.values[lo..hi].to_vec(), masses: self.masses[lo..hi].to_vec() }
    }

    fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn distinct_values(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for &v in &self.values {
            if last != Some(v) {
                count += 1;
                last = Some(v);
            }
        }
        count
    }

    fn mean(&self) -> f64 {
        self.values.iter().zip(&self.masses).map(|(v, m)| v * m).sum::<f64>() / self.total()
    }

    fn sd(&self) -> f64 {
        let mean = self.mean();
        let var = self.values.iter().zip(&self.masses).map(|(v, m)| m * (v - mean).powi(2)).sum::<f64>() / self.total();
        var.max(0.0).sqrt()
    }

    /// Weighted quantile with plotting positions at mass midpoints.
    fn quantile(&self, q: f64) -> f64 {
        let total = self.total();
        let mut cum = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (&v, &m) in self.values.iter().zip(&self.masses) {
            let pos = (cum + 0.5 * m) / total;
            cum += m;
            if pos >= q {
                return match prev {
                    None => v,
                    Some((pv, ppos)) => pv + (v - pv) * (q - ppos) / (pos - ppos),
                };
            }
            prev = Some((v, pos));
        }
        *self.values.last().expect("non-empty sample")
    }

    fn window(&self, center: f64, half_width: f64) -> std::ops::Range<usize> {
        let lo = self.values.partition_point(|&v| v < center - half_width);
        let hi = self.values.partition_point(|&v| v <= center + half_width);
        lo..hi
    }

    fn kde(&self, w: f64, kernel: &KernelSpec) -> f64 {
        let range = self.window(w, kernel.half_width());
        let s: f64 =
            self.values[range.clone()].iter().zip(&self.masses[range]).map(|(&v, &m)| m * kernel.eval(v - w)).sum();
        s / self.total()
    }
}

fn bandwidth_of(sorted: &SortedSample, n_eff: f64) -> Result<f64, DensityError> {
    if sorted.distinct_values() < 2 {
        return Err(DensityError::DegenerateSample);
    }
    let sd = sorted.sd();
    let iqr = sorted.quantile(0.75) - sorted.quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n_eff.powf(-0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Ok(sorted.mean().abs().max(1.0) * 1e-2)
    }
}

/// Silverman-type rule on the mass-weighted sample:
/// `h = 0.9 * min(sd, IQR / 1.34) * n_eff^(-1/5)`.
pub fn select_bandwidth(sample: &WeightedSample) -> Result<f64, DensityError> {
    bandwidth_of(&sample.sorted(), sample.effective_size())
}

/// Evenly spaced fit points over `[min - 3 h0, max + 3 h0]` where `h0` is the
/// unit-mass bandwidth of all `values`. Returns the grid and `h0`.
pub fn pooled_grid(values: &[f64], size: usize) -> Result<(Vec<f64>, f64), DensityError> {
    if size < 2 {
        return Err(DensityError::InvalidGrid(format!("grid size {size}")));
    }
    let sample = WeightedSample::unit(values.to_vec())?;
    let h0 = select_bandwidth(&sample)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h0;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h0;
    let step = (hi - lo) / (size - 1) as f64;
    let mut grid: Vec<f64> = (0..size).map(|g| lo + step * g as f64).collect();
    grid[size - 1] = hi;
    Ok((grid, h0))
}

/// Local polynomial coefficients `beta_0..beta_p` at fit point `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFitCoefficients {
    pub beta: Vec<f64>,
    pub point: f64,
}

impl LocalFitCoefficients {
    pub fn degree(&self) -> usize {
        self.beta.len() - 1
    }

    /// Re-expands the same polynomial around `new_point`.
    pub fn recentered(&self, new_point: f64) -> Self {
        let delta = new_point - self.point;
        let p = self.beta.len();
        let mut out = vec![0.0; p];
        for (m, &b) in self.beta.iter().enumerate() {
            let mut binom = 1.0;
            for (r, slot) in out.iter_mut().enumerate().take(m + 1) {
                // sum over (u - w')^r of C(m, r) delta^(m - r)
                *slot += b * binom * delta.powi((m - r) as i32);
                binom = binom * (m - r) as f64 / (r + 1) as f64;
            }
        }
        Self { beta: out, point: new_point }
    }
}

/// Value, gradient and Hessian of the local objective in `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObjective {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

/// Sufficient statistics of one fit point, in the scaled basis `t = (u - w) / h`.
struct LocalProblem {
    degree: usize,
    scale: f64,
    // sum_m mass_m K_h(w_m - w) t_m^j
    moments: Vec<f64>,
    total_mass: f64,
    // (t, quadrature weight * K_h)
    nodes: Vec<(f64, f64)>,
    // distinct sample values inside the kernel window
    distinct: usize,
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

impl LocalProblem {
    fn build(sample: &SortedSample, point: f64, kernel: &KernelSpec, support: (f64, f64), degree: usize) -> Self {
        let h = kernel.bandwidth();
        let mut moments = vec![0.0; degree + 1];
        let range = sample.window(point, kernel.half_width());
        let mut distinct = 0;
        let mut last = None;
        for (&v, &m) in sample.values[range.clone()].iter().zip(&sample.masses[range]) {
            if last != Some(v) {
                distinct += 1;
                last = Some(v);
            }
            let k = m * kernel.eval(v - point);
            let t = (v - point) / h;
            let mut tp = 1.0;
            for slot in moments.iter_mut() {
                *slot += k * tp;
                tp *= t;
            }
        }
        let a = (point - kernel.half_width()).max(support.0);
        let b = (point + kernel.half_width()).min(support.1);
        let nodes = if b > a {
            GaussLegendre::order40()
                .mapped(a, b)
                .map(|(u, wq)| ((u - point) / h, wq * kernel.eval(u - point)))
                .collect()
        } else {
            Vec::new()
        };
        Self { degree, scale: h, moments, total_mass: sample.total(), nodes, distinct }
    }

    fn poly(&self, gamma: &DVector<f64>, t: f64) -> f64 {
        gamma.iter().rev().fold(0.0, |acc, &g| acc * t + g)
    }

    fn value(&self, gamma: &DVector<f64>) -> Result<f64, DensityError> {
        let data: f64 = gamma.iter().zip(&self.moments).map(|(g, m)| g * m).sum();
        let integral: f64 = self.nodes.iter().map(|&(t, wk)| wk * self.poly(gamma, t).exp()).sum();
        let v = data - self.total_mass * (integral - 1.0);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DensityError::NonFiniteObjective)
        }
    }

    fn evaluate(&self, gamma: &DVector<f64>) -> Result<Evaluation, DensityError> {
        let p = self.degree;
        // integrals of K e^zeta t^j for j = 0..2p
        let mut integrals = vec![0.0; 2 * p + 1];
        for &(t, wk) in &self.nodes {
            let mut f = wk * self.poly(gamma, t).exp();
            for slot in integrals.iter_mut() {
                *slot += f;
                f *= t;
            }
        }
        let data: f64 = gamma.iter().zip(&self.moments).map(|(g, m)| g * m).sum();
        let value = data - self.total_mass * (integrals[0] - 1.0);
        let gradient = DVector::from_fn(p + 1, |j, _| self.moments[j] - self.total_mass * integrals[j]);
        let hessian = DMatrix::from_fn(p + 1, p + 1, |j, k| -self.total_mass * integrals[j + k]);
        if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return Err(DensityError::NonFiniteObjective);
        }
        Ok(Evaluation { value, gradient, hessian })
    }

    fn to_scaled(&self, beta: &[f64]) -> DVector<f64> {
        DVector::from_fn(beta.len(), |j, _| beta[j] * self.scale.powi(j as i32))
    }

    fn to_unscaled(&self, gamma: &DVector<f64>) -> Vec<f64> {
        gamma.iter().enumerate().map(|(j, g)| g / self.scale.powi(j as i32)).collect()
    }

    /// Damped Newton ascent from `start` (scaled coordinates).
    ///
    /// The maximum is finite only when the window holds at least `max(1, p)`
    /// distinct values; with fewer, a log-polynomial spike on the data drives
    /// the objective to infinity, so such points are refused up front.
    fn maximize(&self, start: DVector<f64>, point: f64) -> Result<DVector<f64>, DensityError> {
        if !(self.moments[0] > 0.0) || self.nodes.is_empty() || self.distinct < self.degree.max(1) {
            return Err(DensityError::LocalFitDiverged(point));
        }
        let mut gamma = start;
        let mut current = self.evaluate(&gamma).map_err(|_| DensityError::LocalFitDiverged(point))?;
        for _ in 0..MAX_NEWTON_ITERS {
            if current.gradient.amax() <= GRAD_TOL * self.moments[0] {
                return Ok(gamma);
            }
            let step = newton_direction(&current.hessian, &current.gradient);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let candidate = &gamma + &step * t;
                if let Ok(v) = self.value(&candidate) {
                    if v >= current.value {
                        accepted = Some(candidate);
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some(next) = accepted else {
                // no ascent along the Newton ray: stationary to working precision
                if current.gradient.amax() <= 1e-6 * self.moments[0].max(f64::MIN_POSITIVE) {
                    return Ok(gamma);
                }
                return Err(DensityError::LocalFitDiverged(point));
            };
            let moved = (&next - &gamma).amax();
            gamma = next;
            current = self.evaluate(&gamma).map_err(|_| DensityError::LocalFitDiverged(point))?;
            if moved <= 1e-12 * (1.0 + gamma.amax()) {
                return if current.gradient.amax() <= 1e-6 * self.moments[0] {
                    Ok(gamma)
                } else {
                    Err(DensityError::LocalFitDiverged(point))
                };
            }
        }
        if current.gradient.amax() <= 1e-6 * self.moments[0] {
            Ok(gamma)
        } else {
            Err(DensityError::LocalFitDiverged(point))
        }
    }
}

/// Solves `(-H + tau I) d = g`, doubling `tau` until the system is positive definite.
fn newton_direction(hessian: &DMatrix<f64>, gradient: &DVector<f64>) -> DVector<f64> {
    let neg = -hessian;
    let scale = neg.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut tau = 0.0;
    loop {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += tau;
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(gradient);
        }
        tau = if tau == 0.0 { 1e-10 * scale } else { tau * 2.0 };
        if !tau.is_finite() {
            return gradient.clone();
        }
    }
}

fn check_degree(degree: usize) -> Result<(), DensityError> {
    if degree > 2 {
        Err(DensityError::InvalidDegree(degree))
    } else {
        Ok(())
    }
}

/// Local log-likelihood at `coeffs.point` with its exact derivatives in `beta`.
/// The penalty integral runs over the kernel window clipped to `support`.
pub fn local_objective(
    coeffs: &LocalFitCoefficients,
    sample: &WeightedSample,
    kernel: &KernelSpec,
    support: (f64, f64),
) -> Result<LocalObjective, DensityError> {
    check_degree(coeffs.degree())?;
    if coeffs.beta.iter().any(|b| !b.is_finite()) {
        return Err(DensityError::NonFiniteObjective);
    }
    let problem = LocalProblem::build(&sample.sorted().within(support), coeffs.point, kernel, support, coeffs.degree());
    let eval = problem.evaluate(&problem.to_scaled(&coeffs.beta))?;
    let h = kernel.bandwidth();
    let p = coeffs.degree();
    Ok(LocalObjective {
        value: eval.value,
        gradient: (0..=p).map(|j| eval.gradient[j] * h.powi(j as i32)).collect(),
        hessian: (0..=p).map(|j| (0..=p).map(|k| eval.hessian[(j, k)] * h.powi((j + k) as i32)).collect()).collect(),
    })
}

/// Maximizes the local objective at a single point.
pub fn fit_local_point(
    sample: &WeightedSample,
    point: f64,
    kernel: &KernelSpec,
    support: (f64, f64),
    start: &LocalFitCoefficients,
) -> Result<LocalFitCoefficients, DensityError> {
    check_degree(start.degree())?;
    let sorted = sample.sorted().within(support);
    let problem = LocalProblem::build(&sorted, point, kernel, support, start.degree());
    let start = start.recentered(point);
    let gamma = problem.maximize(problem.to_scaled(&start.beta), point)?;
    Ok(LocalFitCoefficients { beta: problem.to_unscaled(&gamma), point })
}

/// A density tabulated as log-values on an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    pub bandwidth: f64,
    pub degree: usize,
    pub support: (f64, f64),
    /// Grid indices where the local fit failed and the kernel estimate was used.
    pub flagged: Vec<usize>,
}

impl DensityEstimate {
    /// Wraps tabulated values; the support is the grid span.
    pub fn from_table(
        grid: Vec<f64>,
        log_density: Vec<f64>,
        bandwidth: f64,
        degree: usize,
    ) -> Result<Self, DensityError> {
        validate_grid(&grid)?;
        if grid.len() != log_density.len() {
            return Err(DensityError::InvalidGrid("grid and values differ in length".into()));
        }
        let support = (grid[0], grid[grid.len() - 1]);
        Ok(Self { grid, log_density, bandwidth, degree, support, flagged: Vec::new() })
    }

    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        let f: Vec<f64> = self.log_density.iter().map(|l| l.exp()).collect();
        trapezoid(&self.grid, &f)
    }

    pub fn evaluate(&self, w: f64) -> f64 {
        evaluate_density(self, w)
    }

    /// `ln` of [`evaluate_density`], so never below `ln(DENSITY_FLOOR)`.
    pub fn log_evaluate(&self, w: f64) -> f64 {
        let n = self.grid.len();
        if !(w >= self.grid[0] && w <= self.grid[n - 1]) {
            return DENSITY_FLOOR.ln();
        }
        let idx = self.grid.partition_point(|&g| g <= w).clamp(1, n - 1);
        let (g0, g1) = (self.grid[idx - 1], self.grid[idx]);
        let (l0, l1) = (self.log_density[idx - 1], self.log_density[idx]);
        let frac = (w - g0) / (g1 - g0);
        let l = l0 + frac * (l1 - l0);
        l.max(DENSITY_FLOOR.ln())
    }
}

fn validate_grid(grid: &[f64]) -> Result<(), DensityError> {
    if grid.len() < 2 {
        return Err(DensityError::InvalidGrid("need at least two points".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(DensityError::InvalidGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Fits the log-density at every grid point, warm-starting each point from
/// the previous solution, then normalizes to unit trapezoidal mass over the grid.
pub fn fit_local_density(
    sample: &WeightedSample,
    grid: &[f64],
    kernel: &KernelSpec,
    degree: usize,
) -> Result<DensityEstimate, DensityError> {
    check_degree(degree)?;
    validate_grid(grid)?;
    let support = (grid[0], grid[grid.len() - 1]);
    let sorted = sample.sorted().within(support);
    if sorted.values.is_empty() {
        return Err(DensityError::InvalidSample("no positive mass on the grid range".into()));
    }
    let mut log_density = Vec::with_capacity(grid.len());
    let mut flagged = Vec::new();
    let mut previous: Option<LocalFitCoefficients> = None;

    for (g, &point) in grid.iter().enumerate() {
        let problem = LocalProblem::build(&sorted, point, kernel, support, degree);
        let kde = sorted.kde(point, kernel);
        let cold = {
            let mut beta = vec![0.0; degree + 1];
            beta[0] = kde.max(f64::MIN_POSITIVE).ln();
            DVector::from_vec(beta)
        };
        let warm = previous.as_ref().map(|c| problem.to_scaled(&c.recentered(point).beta));
        let solved = match warm {
            Some(start) => problem.maximize(start, point).or_else(|_| problem.maximize(cold.clone(), point)),
            None => problem.maximize(cold, point),
        };
        match solved {
            Ok(gamma) => {
                let beta = problem.to_unscaled(&gamma);
                log_density.push(beta[0].max(DENSITY_FLOOR.ln()));
                previous = Some(LocalFitCoefficients { beta, point });
            }
            Err(_) => {
                log_density.push(kde.max(DENSITY_FLOOR).ln());
                flagged.push(g);
                previous = None;
            }
        }
    }

    let est =
        DensityEstimate { grid: grid.to_vec(), log_density, bandwidth: kernel.bandwidth(), degree, support, flagged };
    normalize_density(&est)
}

/// Shifts the log-density so its trapezoidal integral over the grid is 1.
pub fn normalize_density(est: &DensityEstimate) -> Result<DensityEstimate, DensityError> {
    if est.log_density.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(DensityError::ZeroMassDensity);
    }
    let max = est.log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(DensityError::ZeroMassDensity);
    }
    let scaled: Vec<f64> = est.log_density.iter().map(|l| (l - max).exp()).collect();
    let mass = trapezoid(&est.grid, &scaled);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(DensityError::ZeroMassDensity);
    }
    let shift = max + mass.ln();
    let mut out = est.clone();
    for l in out.log_density.iter_mut() {
        *l -= shift;
    }
    Ok(out)
}

/// Log-linear interpolation between grid points; `DENSITY_FLOOR` outside
/// the grid and wherever the value would fall below it.
pub fn evaluate_density(est: &DensityEstimate, w: f64) -> f64 {
    let n = est.grid.len();
    if !(w >= est.grid[0] && w <= est.grid[n - 1]) {
        return DENSITY_FLOOR;
    }
    est.log_evaluate(w).exp().max(DENSITY_FLOOR)
}
