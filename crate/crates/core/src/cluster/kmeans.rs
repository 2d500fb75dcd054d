//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::LabelVector;
use crate::rng::SeededRng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: LabelVector,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: ArrayView2<'_, f64>, k: usize, rng: &mut SeededRng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.index(n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Array1<f64> = points.rows().into_iter().map(|p| sq_dist(p, points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// One seeded Lloyd run. Returns `None` if a cluster ends up empty.
fn lloyd(points: ArrayView2<'_, f64>, k: usize, iterations: usize, rng: &mut SeededRng) -> Option<KMeansResult> {
    let (n, dim) = points.dim();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, p) in points.rows().into_iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            sums.row_mut(assign[i]).scaled_add(1.0, &p);
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            // an empty cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
    }
    let mut counts = vec![0usize; k];
    let mut inertia = 0.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        assign[i] = c;
        counts[c] += 1;
        inertia += d;
    }
    if counts.iter().any(|&c| c == 0) {
        return None;
    }
    Some(KMeansResult {
        labels: LabelVector::with_k(assign, k).expect("labels < k"),
        centroids,
        inertia,
    })
}

/// Clusters the ROWS of `points` into `k` groups, keeping the restart with
/// the lowest inertia among those with no empty cluster.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    restarts: usize,
    iterations: usize,
    rng: &mut SeededRng,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("k-means input has non-finite values".into()));
    }
    let streams: Vec<SeededRng> = (0..restarts.max(1) as u64).map(|r| rng.split(r)).collect();
    // advance the caller's stream so consecutive calls differ
    rng.next_u64();
    let runs: Vec<Option<KMeansResult>> = streams
        .into_par_iter()
        .map(|mut s| lloyd(points, k, iterations, &mut s))
        .collect();
    runs.into_iter()
        .flatten()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .ok_or(Error::EmptyCluster { k })
}
