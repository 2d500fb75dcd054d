//! Spectral clustering of weighting-map columns.
//!
//! The affinity between columns `i` and `j` is `exp(-|w_i - w_j|_2 / sigma)`
//! (unsquared distance by default). Partitioning follows the normalized-cut
//! relaxation: the `k` smallest eigenvectors of
//! `L_sym = I - D^(-1/2) A D^(-1/2)` embed each point, rows are scaled to
//! unit length and k-means assigns the final labels.

pub mod accuracy;
pub mod eigen;
pub mod kmeans;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::LabelVector;
use crate::rng::SeededRng;

pub use accuracy::clustering_accuracy;
pub use kmeans::{kmeans, KMeansResult, DEFAULT_ITERATIONS, DEFAULT_RESTARTS};

/// Dense symmetric affinity with unit diagonal and entries in `[0, 1]`.
///
/// Entries produced by [`affinity`] are strictly positive in exact
/// arithmetic but may underflow to zero for distances far beyond `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    a: Array2<f64>,
    sigma: f64,
}

impl AffinityMatrix {
    /// Wraps a hand-built matrix after checking symmetry, range and the
    /// unit diagonal.
    pub fn from_dense(a: Array2<f64>, sigma: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimMismatch(format!("affinity {:?} is not square", a.dim())));
        }
        for i in 0..n {
            if a[[i, i]] != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let v = a[[i, j]];
                if v != a[[j, i]] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) = {v} breaks symmetry or [0, 1] range"
                    )));
                }
            }
        }
        Ok(AffinityMatrix { a, sigma })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Affinity over the COLUMNS of `w`. With `squared` the exponent uses the
/// squared distance instead.
pub fn affinity(w: ArrayView2<'_, f64>, sigma: f64, squared: bool) -> Result<AffinityMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be positive")));
    }
    let n = w.ncols();
    let cols: Vec<_> = w.columns().into_iter().collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| {
                    let d2: f64 = cols[i]
                        .iter()
                        .zip(cols[j].iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    let d = if squared { d2 } else { d2.sqrt() };
                    (-d / sigma).exp()
                })
                .collect()
        })
        .collect();
    let mut a = Array2::eye(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    Ok(AffinityMatrix { a, sigma })
}

/// Row-normalized spectral embedding: the eigenvectors of the `k`
/// smallest eigenvalues of `L_sym`, one row per point.
pub fn spectral_embedding(a: &AffinityMatrix, k: usize) -> Result<Array2<f64>> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    let inv_sqrt: Vec<f64> = a
        .a
        .axis_iter(Axis(0))
        .map(|row| {
            let d: f64 = row.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // (I + D^-1/2 A D^-1/2) / 2 shares eigenvectors with L_sym, in reverse
    // order, and is positive semi-definite.
    let mut b = a.a.clone();
    b.indexed_iter_mut().for_each(|((i, j), v)| {
        *v *= inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            *v += 1.0;
        }
        *v *= 0.5;
    });
    let pairs = eigen::top_eigenpairs(b.view(), k)?;
    let mut emb = pairs.vectors;
    for mut row in emb.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(emb)
}

/// Normalized-cut partition of the affinity graph into `k` groups.
pub fn normalized_cut(a: &AffinityMatrix, k: usize, rng: &mut SeededRng) -> Result<LabelVector> {
    if k < 2 || k > a.n() {
        return Err(Error::InvalidArgument(format!(
            "normalized cut needs 2 <= k <= n, got k = {k}, n = {}",
            a.n()
        )));
    }
    let emb = spectral_embedding(a, k)?;
    Ok(kmeans(emb.view(), k, DEFAULT_RESTARTS, DEFAULT_ITERATIONS, rng)?.labels)
}
