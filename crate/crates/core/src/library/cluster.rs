//! k-means with k-means++ seeding, and a two-component PCA projection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::rng::SceneRng;

pub const DEFAULT_K: usize = 6;
pub const KMEANS_ITERATIONS: usize = 50;
pub const KMEANS_SEED: u64 = 0x6b6d_6561_6e73;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        if *n > 0 {
            s.iter_mut().for_each(|x| *x /= *n as f64);
        }
    }
    sums
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut SceneRng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![(rng.next_f64() * n as f64) as usize % n];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.next_f64() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // Every point coincides with a chosen centroid; fall back to the
            // first index not yet used so centroids stay distinct.
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(pick);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[pick]));
        }
    }
    chosen
}

/// Moves one point into each empty cluster: the point farthest from its
/// centroid among clusters that have more than one member.
fn fill_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(&points[i], &centroids[assignments[i]]);
                let dj = sq_dist(&points[j], &centroids[assignments[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("k <= n leaves a donor cluster");
        assignments[donor] = empty;
    }
}

/// Deterministic for a given seed. Panics if `k` is 0 or exceeds the point count.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Clustering {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=n");
    let mut rng = SceneRng::new(seed);
    let mut centroids: Vec<Vec<f64>> = plus_plus_init(points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignments: Vec<usize> = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < KMEANS_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
        fill_empty(points, &mut next, &centroids, k);
        let stable = next == assignments;
        assignments = next;
        centroids = means(points, &assignments, k);
        if stable {
            break;
        }
    }
    Clustering {
        assignments,
        centroids,
        iterations,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Variance along each of the two axes (covariance eigenvalues).
    pub variance: [f64; 2],
    pub total_variance: f64,
    /// Set when the second axis carries no variance and was zeroed.
    pub degenerate: bool,
}

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Projects rows onto the top two principal axes of their sample
/// covariance. Each axis is signed so its largest-magnitude loading is
/// positive. Needs at least two rows.
pub fn pca_2d(rows: &[Vec<f64>]) -> Projection {
    let n = rows.len();
    assert!(n >= 2, "projection needs at least two points");
    let dim = rows[0].len();
    let mut x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    let mean = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &mean;
    }
    let cov = x.transpose() * &x / (n - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut coords = vec![[0.0; 2]; n];
    let mut variance = [0.0; 2];
    let mut degenerate = false;
    for (axis, &col) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[col].max(0.0);
        if lambda <= DEGENERATE_VARIANCE * total_variance.max(1.0) {
            degenerate = degenerate || axis == 1;
            continue;
        }
        let mut v = eig.eigenvectors.column(col).into_owned();
        let (imax, _) =
            v.iter().enumerate().fold(
                (0, 0.0f64),
                |(bi, bv), (i, x)| if x.abs() > bv + 1e-15 { (i, x.abs()) } else { (bi, bv) },
            );
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        let proj = &x * v;
        for i in 0..n {
            coords[i][axis] = proj[i];
        }
        variance[axis] = lambda;
    }
    Projection {
        coords,
        variance,
        total_variance,
        degenerate,
    }
}
