use npwnet::density::DensityEstimate;
use npwnet::metrics::{
    best_label_matching, best_theta_matching, descriptive_stats, ks_statistic, log_rand_index, rand_index, rase_theta,
    MetricsError, PERFECT_LOG_RASE,
};
use npwnet::simulate::edge_probability;
use npwnet::Labels;
use proptest::prelude::*;

fn labels(z: &[usize]) -> Labels {
    Labels::from_assignments(z.to_vec())
}

/// Rand index by checking every pair.
fn pairwise_rand(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

#[test]
fn rand_index_examples() {
    assert_eq!(rand_index(&labels(&[0, 0, 1, 1]), &labels(&[1, 1, 0, 0])).unwrap(), 1.0);
    assert_eq!(log_rand_index(&labels(&[0, 0, 1, 1]), &labels(&[0, 0, 1, 1])).unwrap(), 0.0);
    // pairs: (01) split vs joined, (02) joined vs split, (12) split vs split
    assert_eq!(rand_index(&labels(&[0, 1, 0]), &labels(&[0, 0, 1])).unwrap(), 1.0 / 3.0);
    assert_eq!(rand_index(&labels(&[0, 0, 0, 0]), &labels(&[0, 1, 2, 3])).unwrap(), 0.0);
    assert!(matches!(rand_index(&labels(&[0]), &labels(&[0])), Err(MetricsError::TooShort(2))));
}

#[test]
fn rase_examples() {
    assert_eq!(rase_theta(&[-1.0, 1.0], &[-1.0, 1.0]).unwrap(), PERFECT_LOG_RASE);
    assert_eq!(rase_theta(&[1.0, -1.0], &[-1.0, 1.0]).unwrap(), PERFECT_LOG_RASE);
    let v = rase_theta(&[-0.8, 1.2], &[-1.0, 1.0]).unwrap();
    assert!((v - 0.2f64.ln()).abs() < 1e-12);
    // best matching of (0.5, -0.5, 2) to (-0.5, 0.5, 2) swaps the first two
    assert_eq!(best_theta_matching(&[0.5, -0.5, 2.0], &[-0.5, 0.5, 2.0]), vec![1, 0, 2]);
    assert!(matches!(rase_theta(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(1, 2))));
}

#[test]
fn edge_probability_closed_forms() {
    let e = std::f64::consts::E;
    assert!((edge_probability(&[-1.0, 1.0], 0, 0) - 1.0 / (1.0 + e * e)).abs() < 1e-12);
    assert!((edge_probability(&[-1.0, 1.0], 0, 0) - 0.119202922022118).abs() < 1e-12);
    assert!((edge_probability(&[-0.5, 0.5], 0, 1) - 0.5).abs() < 1e-12);
    assert!((edge_probability(&[-1.0, 1.0], 1, 1) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
}

#[test]
fn ks_of_exact_table_is_small() {
    let grid: Vec<f64> = (0..401).map(|g| -5.0 + 0.025 * g as f64).collect();
    let pdf = |w: f64| (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let logs = grid.iter().map(|&w| pdf(w).ln()).collect();
    let est = DensityEstimate::from_table(grid, logs, 0.1, 2).unwrap();
    assert!(ks_statistic(&est, pdf) < 1e-4);
    assert!((ks_statistic(&est, |w| pdf(w - 1.0)) - 0.2).abs() < 0.1);
}

#[test]
fn moments_of_known_samples() {
    let d = descriptive_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert!(d.skewness.abs() < 1e-15);
    assert!((d.kurtosis - 1.7).abs() < 1e-12);
    let d = descriptive_stats(&[0.0, 0.0, 0.0, 1.0]).unwrap();
    // m2 = 3/16, m3 = 3/32 -> skew = 2/sqrt(3)
    assert!((d.skewness - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!(matches!(descriptive_stats(&[1.0, 2.0]), Err(MetricsError::TooShort(3))));
}

proptest! {
    #[test]
    fn rand_index_matches_pairwise_count(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 2..40),
    ) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let ri = rand_index(&labels(&a), &labels(&b)).unwrap();
        prop_assert!((ri - pairwise_rand(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ri));
        prop_assert!((ri - rand_index(&labels(&b), &labels(&a)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn rand_index_ignores_label_names(z in prop::collection::vec(0usize..3, 2..30)) {
        let renamed: Vec<usize> = z.iter().map(|&c| [2, 0, 1][c]).collect();
        prop_assert_eq!(rand_index(&labels(&z), &labels(&renamed)).unwrap(), 1.0);
        let perm = best_label_matching(&labels(&z), &labels(&renamed), 3).unwrap();
        for (a, b) in z.iter().zip(&renamed) {
            prop_assert_eq!(perm[*a], *b);
        }
    }

    #[test]
    fn rase_is_permutation_invariant(theta in prop::collection::vec(-3.0f64..3.0, 1..5), shift in 0.01f64..1.0) {
        let hat: Vec<f64> = theta.iter().rev().map(|t| t + shift).collect();
        let a = rase_theta(&hat, &theta).unwrap();
        let reversed: Vec<f64> = hat.iter().rev().copied().collect();
        prop_assert!((a - rase_theta(&reversed, &theta).unwrap()).abs() < 1e-12);
        prop_assert!(a <= shift.ln() + 1e-12);
    }
}
