use npwnet::density::{
    evaluate_density, fit_local_density, fit_local_point, local_objective, normalize_density, pooled_grid,
    select_bandwidth, DensityError, DensityEstimate, KernelSpec, LocalFitCoefficients, WeightedSample, DENSITY_FLOOR,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use statrs::distribution::{Continuous, Gamma as GammaDist, Normal as NormalDist};

fn draws<D: Distribution<f64>>(d: D, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| d.sample(&mut rng)).collect()
}

fn poly(beta: &[f64], d: f64) -> f64 {
    beta.iter().rev().fold(0.0, |acc, b| acc * d + b)
}

/// The local objective summed directly, with a fine trapezoid for the penalty.
fn oracle_objective(c: &LocalFitCoefficients, s: &WeightedSample, k: &KernelSpec, support: (f64, f64)) -> f64 {
    let data: f64 =
        s.values().iter().zip(s.masses()).map(|(&v, &m)| m * k.eval(v - c.point) * poly(&c.beta, v - c.point)).sum();
    let lo = (c.point - k.half_width()).max(support.0);
    let hi = (c.point + k.half_width()).min(support.1);
    let steps = 20_000;
    let du = (hi - lo) / steps as f64;
    let f = |u: f64| k.eval(u - c.point) * poly(&c.beta, u - c.point).exp();
    let integral: f64 = (0..steps).map(|g| 0.5 * du * (f(lo + du * g as f64) + f(lo + du * (g + 1) as f64))).sum();
    data - s.total_mass() * (integral - 1.0)
}

#[test]
fn objective_matches_direct_evaluation() {
    let sample = WeightedSample::unit(draws(Normal::new(0.0, 1.0).unwrap(), 300, 1)).unwrap();
    let kernel = KernelSpec::gaussian(0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let point = rng.gen_range(-2.0..2.0);
        let c = LocalFitCoefficients {
            beta: vec![rng.gen_range(-3.0..0.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..0.0)],
            point,
        };
        let got = local_objective(&c, &sample, &kernel, (-10.0, 10.0)).unwrap().value;
        let want = oracle_objective(&c, &sample, &kernel, (-10.0, 10.0));
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let sample = WeightedSample::new(
        draws(Normal::new(1.0, 2.0).unwrap(), 200, 3),
        (0..200).map(|m| 0.2 + (m % 7) as f64 / 7.0).collect(),
    )
    .unwrap();
    let kernel = KernelSpec::gaussian(0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for degree in 0..=2 {
        for _ in 0..10 {
            let point = rng.gen_range(-2.0..4.0);
            let beta: Vec<f64> = (0..=degree)
                .map(|j| if j == 0 { rng.gen_range(-3.0..-1.0) } else { rng.gen_range(-0.3..0.3) })
                .collect();
            let c = LocalFitCoefficients { beta, point };
            let obj = local_objective(&c, &sample, &kernel, (-20.0, 20.0)).unwrap();
            for j in 0..=degree {
                let h = 1e-5 * (1.0 + c.beta[j].abs());
                let shifted = |d: f64| {
                    let mut b = c.clone();
                    b.beta[j] += d;
                    local_objective(&b, &sample, &kernel, (-20.0, 20.0)).unwrap()
                };
                let (plus, minus) = (shifted(h), shifted(-h));
                let fd = (plus.value - minus.value) / (2.0 * h);
                assert!((fd - obj.gradient[j]).abs() <= 1e-5 * obj.gradient[j].abs().max(1.0));
                for l in 0..=degree {
                    let fd = (plus.gradient[l] - minus.gradient[l]) / (2.0 * h);
                    assert!((fd - obj.hessian[j][l]).abs() <= 1e-4 * obj.hessian[j][l].abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn local_point_fit_is_stationary() {
    let sample = WeightedSample::unit(draws(Normal::new(0.0, 1.0).unwrap(), 500, 5)).unwrap();
    let kernel = KernelSpec::gaussian(0.35).unwrap();
    let start = LocalFitCoefficients { beta: vec![-1.0, 0.0, 0.0], point: 0.0 };
    let fitted = fit_local_point(&sample, 0.5, &kernel, (-10.0, 10.0), &start).unwrap();
    let obj = local_objective(&fitted, &sample, &kernel, (-10.0, 10.0)).unwrap();
    assert!(obj.gradient.iter().all(|g| g.abs() < 1e-6 * sample.total_mass()));
    let truth = NormalDist::new(0.0, 1.0).unwrap().pdf(0.5);
    assert!((fitted.beta[0].exp() - truth).abs() < 0.05);
}

fn sup_error(est: &DensityEstimate, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..=2000)
        .map(|g| lo + (hi - lo) * g as f64 / 2000.0)
        .map(|w| (evaluate_density(est, w) - f(w)).abs())
        .fold(0.0, f64::max)
}

fn fine_integral(est: &DensityEstimate) -> f64 {
    let (lo, hi) = (est.grid[0], *est.grid.last().unwrap());
    let steps = 40_000;
    let dw = (hi - lo) / steps as f64;
    (0..steps)
        .map(|g| {
            0.5 * dw * (evaluate_density(est, lo + dw * g as f64) + evaluate_density(est, lo + dw * (g + 1) as f64))
        })
        .sum()
}

#[test]
fn recovers_normal_and_gamma_densities() {
    let x = draws(Normal::new(0.0, 1.0).unwrap(), 1000, 6);
    let sample = WeightedSample::unit(x.clone()).unwrap();
    let (grid, _) = pooled_grid(&x, 101).unwrap();
    let kernel = KernelSpec::gaussian(select_bandwidth(&sample).unwrap()).unwrap();
    let est = fit_local_density(&sample, &grid, &kernel, 2).unwrap();
    let normal = NormalDist::new(0.0, 1.0).unwrap();
    assert!(sup_error(&est, |w| normal.pdf(w), -3.0, 3.0) < 0.07);
    assert!((fine_integral(&est) - 1.0).abs() < 1e-3);

    let x = draws(Gamma::new(2.0, 1.0 / 1.2).unwrap(), 1000, 7);
    let sample = WeightedSample::unit(x.clone()).unwrap();
    let (grid, _) = pooled_grid(&x, 101).unwrap();
    let kernel = KernelSpec::gaussian(select_bandwidth(&sample).unwrap()).unwrap();
    let est = fit_local_density(&sample, &grid, &kernel, 2).unwrap();
    let gamma = GammaDist::new(2.0, 1.2).unwrap();
    assert!(sup_error(&est, |w| gamma.pdf(w), 0.2, 6.0) < 0.1);
}

#[test]
fn bandwidth_follows_the_rule_of_thumb() {
    // mass-weighted sd is sqrt(2); quartiles at midpoint plotting positions are 1.75 and 4.25
    let s = WeightedSample::unit(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let expected = 0.9 * 2f64.sqrt().min(2.5 / 1.34) * 5f64.powf(-0.2);
    assert!((select_bandwidth(&s).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn evaluation_is_floored_outside_the_grid() {
    let est = DensityEstimate::from_table(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 0.0], 0.5, 2).unwrap();
    assert_eq!(evaluate_density(&est, -0.1), DENSITY_FLOOR);
    assert_eq!(evaluate_density(&est, 2.1), DENSITY_FLOOR);
    assert_eq!(est.log_evaluate(5.0), DENSITY_FLOOR.ln());
    assert!((evaluate_density(&est, 1.5) - 1.0).abs() < 1e-15);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(KernelSpec::gaussian(0.0), Err(DensityError::InvalidKernel(_))));
    assert!(matches!(KernelSpec::new(1.0, 1.0), Err(DensityError::InvalidKernel(_))));
    assert!(WeightedSample::new(vec![1.0, 2.0], vec![1.0]).is_err());
    assert!(DensityEstimate::from_table(vec![0.0, 0.0], vec![0.0, 0.0], 1.0, 2).is_err());
    let s = WeightedSample::unit(vec![0.0, 1.0, 2.0]).unwrap();
    let k = KernelSpec::gaussian(1.0).unwrap();
    assert!(matches!(fit_local_density(&s, &[0.0, 1.0], &k, 3), Err(DensityError::InvalidDegree(3))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn recentering_preserves_the_polynomial(
        beta in prop::collection::vec(-2.0f64..2.0, 1..4),
        point in -3.0f64..3.0,
        new_point in -3.0f64..3.0,
        u in -5.0f64..5.0,
    ) {
        let c = LocalFitCoefficients { beta, point };
        let r = c.recentered(new_point);
        let a = poly(&c.beta, u - point);
        let b = poly(&r.beta, u - new_point);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn normalization_gives_unit_mass(logs in prop::collection::vec(-20.0f64..5.0, 5..40)) {
        let grid: Vec<f64> = (0..logs.len()).map(|g| g as f64 * 0.3).collect();
        let est = DensityEstimate::from_table(grid, logs, 1.0, 2).unwrap();
        let n = normalize_density(&est).unwrap();
        prop_assert!((n.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitted_densities_are_positive_and_normalized(seed in 0u64..50) {
        let x = draws(Normal::new(0.0, 1.0).unwrap(), 150, seed);
        let sample = WeightedSample::unit(x.clone()).unwrap();
        let (grid, h) = pooled_grid(&x, 41).unwrap();
        let est = fit_local_density(&sample, &grid, &KernelSpec::gaussian(h).unwrap(), 2).unwrap();
        prop_assert!((est.integral() - 1.0).abs() < 1e-12, "integral {} flagged {:?}", est.integral(), est.flagged);
        prop_assert!(est.log_density.iter().all(|l| l.is_finite() && *l >= DENSITY_FLOOR.ln() - 50.0));
    }
}
