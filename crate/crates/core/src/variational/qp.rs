//! Maximization of `sum_k a_k x_k^2 + b_k x_k` over the (truncated) simplex.
//!
//! With multiplier `lambda` on `sum_k x_k = 1`, stationarity gives
//! `x_k(lambda) = max(floor, (lambda - b_k) / (2 a_k))` for `a_k < 0`. The total
//! is nonincreasing in `lambda`, so the multiplier is bracketed and bisected,
//! then refined by solving the linear equation on the active set exactly.

use super::FitError;

const BISECTION_STEPS: usize = 200;

/// Maximizer over `{x >= 0, sum x = 1}`. Coordinates with `a_k = 0` are linear;
/// when several of them tie for the optimum the lowest index takes the mass.
pub fn solve_node_qp(a: &[f64], b: &[f64]) -> Result<Vec<f64>, FitError> {
    solve_node_qp_with_floor(a, b, 0.0)
}

/// As [`solve_node_qp`] but on `{x >= floor, sum x = 1}`.
pub fn solve_node_qp_with_floor(a: &[f64], b: &[f64], floor: f64) -> Result<Vec<f64>, FitError> {
    let k = a.len();
    if k == 0 || b.len() != k {
        return Err(FitError::InfeasibleCoefficients(format!("a has {} entries, b has {}", k, b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(FitError::InfeasibleCoefficients("non-finite coefficient".into()));
    }
    if let Some(bad) = a.iter().find(|&&v| v > 0.0) {
        return Err(FitError::InfeasibleCoefficients(format!("a_k = {bad} is positive")));
    }
    if !(floor >= 0.0) || floor * k as f64 > 1.0 {
        return Err(FitError::InfeasibleCoefficients(format!("floor {floor} too large for K = {k}")));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }

    let coordinate = |lambda: f64, j: usize| ((lambda - b[j]) / (2.0 * a[j])).max(floor);
    let curved: Vec<usize> = (0..k).filter(|&j| a[j] < 0.0).collect();
    let linear: Vec<usize> = (0..k).filter(|&j| a[j] == 0.0).collect();
    let total = |lambda: f64| -> f64 {
        curved.iter().map(|&j| coordinate(lambda, j)).sum::<f64>() + linear.len() as f64 * floor
    };

    // The multiplier can never drop below the best linear coefficient.
    let linear_max = linear.iter().map(|&j| b[j]).fold(f64::NEG_INFINITY, f64::max);
    if !linear.is_empty() && (curved.is_empty() || total(linear_max) < 1.0) {
        let mut x = vec![floor; k];
        for &j in &curved {
            x[j] = coordinate(linear_max, j);
        }
        let winner = *linear.iter().find(|&&j| b[j] == linear_max).expect("max is attained");
        let used: f64 = x.iter().sum::<f64>() - floor;
        x[winner] = 1.0 - used;
        return Ok(x);
    }

    // total(hi) = K * floor <= 1 and total(lo) >= 1
    let mut hi = curved.iter().map(|&j| b[j] + 2.0 * a[j] * floor).fold(f64::NEG_INFINITY, f64::max);
    let mut lo = curved.iter().map(|&j| b[j] + 2.0 * a[j]).fold(f64::INFINITY, f64::min);
    if !linear.is_empty() {
        lo = lo.max(linear_max);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let mut x = vec![floor; k];
    let active: Vec<usize> = curved.iter().copied().filter(|&j| coordinate(lambda, j) > floor).collect();
    if !active.is_empty() {
        // sum_{j in active} (lambda - b_j) / (2 a_j) = 1 - (K - |active|) floor
        let inv: f64 = active.iter().map(|&j| 1.0 / (2.0 * a[j])).sum();
        let offset: f64 = active.iter().map(|&j| b[j] / (2.0 * a[j])).sum();
        let target = 1.0 - (k - active.len()) as f64 * floor;
        let exact = (target + offset) / inv;
        let polished: Vec<f64> = active.iter().map(|&j| (exact - b[j]) / (2.0 * a[j])).collect();
        if polished.iter().all(|&v| v >= floor && v.is_finite()) {
            for (&j, &v) in active.iter().zip(&polished) {
                x[j] = v;
            }
        } else {
            for &j in &active {
                x[j] = coordinate(lambda, j);
            }
        }
    }
    // absorb rounding in the largest coordinate
    let sum: f64 = x.iter().sum();
    let big = crate::math::argmax(&x);
    x[big] += 1.0 - sum;
    Ok(x)
}
