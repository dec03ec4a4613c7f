use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Dirichlet;

use crate::network::{Labels, WeightedNetwork};

use super::{Responsibilities, GAMMA_FLOOR};

const LLOYD_ITERS: usize = 20;
const ASSIGNED_MASS: f64 = 0.9;
const DIRICHLET_CONCENTRATION: f64 = 50.0;

/// Standardized (degree, mean incident weight) per node. Isolated nodes get
/// mean weight 0. Constant columns are left centred but unscaled.
fn node_features(net: &WeightedNetwork) -> Vec<[f64; 2]> {
    let raw: Vec<[f64; 2]> = (0..net.node_count())
        .map(|i| {
            let nb = net.neighbors(i);
            let mean_w = if nb.is_empty() {
                0.0
            } else {
                nb.iter().map(|&(_, e)| net.edges()[e].w).sum::<f64>() / nb.len() as f64
            };
            [nb.len() as f64, mean_w]
        })
        .collect();
    let n = raw.len() as f64;
    let mut out = raw.clone();
    for c in 0..2 {
        let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        for (o, r) in out.iter_mut().zip(&raw) {
            o[c] = (r[c] - mean) / scale;
        }
    }
    out
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// k-means++ seeding followed by Lloyd iterations on the node features.
pub fn kmeans_labels<R: Rng + ?Sized>(net: &WeightedNetwork, k: usize, rng: &mut R) -> Labels {
    let x = node_features(net);
    let n = x.len();
    if k == 1 {
        return Labels::new(vec![0; n], 1).expect("single cluster");
    }
    let mut centers: Vec<[f64; 2]> = vec![x[rng.gen_range(0..n)]];
    while centers.len() < k {
        let d: Vec<f64> = x.iter().map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let next = match WeightedIndex::new(&d) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a center
            Err(_) => rng.gen_range(0..n),
        };
        centers.push(x[next]);
    }
    let mut assign = vec![0usize; n];
    for _ in 0..LLOYD_ITERS {
        for (a, p) in assign.iter_mut().zip(&x) {
            *a = (0..k).min_by(|&u, &v| dist2(p, &centers[u]).total_cmp(&dist2(p, &centers[v]))).expect("k >= 1");
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&x) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
    }
    Labels::new(assign, k).expect("assignments below K")
}

/// Starting responsibilities: 0.9 on the k-means cluster and `0.1 / (K - 1)`
/// elsewhere, perturbed by a Dirichlet draw with concentration 50 around that
/// row, then lifted to the `GAMMA_FLOOR`.
pub fn initial_responsibilities<R: Rng + ?Sized>(net: &WeightedNetwork, k: usize, rng: &mut R) -> Responsibilities {
    let n = net.node_count();
    if k == 1 {
        return Responsibilities::uniform(n, 1);
    }
    let labels = kmeans_labels(net, k, rng);
    let other = (1.0 - ASSIGNED_MASS) / (k - 1) as f64;
    let mut data = Vec::with_capacity(n * k);
    for &z in labels.as_slice() {
        let alpha: Vec<f64> =
            (0..k).map(|c| DIRICHLET_CONCENTRATION * if c == z { ASSIGNED_MASS } else { other }).collect();
        let draw = Dirichlet::new(&alpha).expect("positive concentrations").sample(rng);
        let sum: f64 = draw.iter().sum();
        let scale = 1.0 - k as f64 * GAMMA_FLOOR;
        data.extend(draw.iter().map(|d| scale * d / sum + GAMMA_FLOOR));
    }
    Responsibilities::from_raw(n, k, data)
}
