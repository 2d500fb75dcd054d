//! Leading eigenpairs of a dense symmetric matrix.
//!
//! Small problems go straight to a full symmetric eigendecomposition.
//! Larger ones use block subspace iteration with a polynomial filter and
//! Rayleigh-Ritz extraction, which only needs matrix-block products.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Problems up to this size use the dense solver.
const DENSE_LIMIT: usize = 500;
const EXTRA_VECTORS: usize = 10;
const MAX_FILTERS: usize = 400;
const FILTER_DEGREE: usize = 8;
const RESIDUAL_TOL: f64 = 1e-9;
/// Fixed start so the embedding does not depend on any caller RNG.
const START_SEED: u64 = 0x5EED_E16E;

/// Eigenvalues in descending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Full eigendecomposition of a small symmetric matrix, sorted descending.
fn dense_descending(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let eig = SymmetricEigen::try_new(to_nalgebra(a), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvector".into()));
    }
    Ok((values, vectors))
}

/// Orthonormalizes the columns in place (modified Gram-Schmidt, two passes).
fn orthonormalize(q: &mut Array2<f64>) -> Result<()> {
    let p = q.ncols();
    for j in 0..p {
        for _ in 0..2 {
            for i in 0..j {
                let (left, mut right) = q.multi_slice_mut((s![.., i], s![.., j]));
                let proj = left.dot(&right);
                right.scaled_add(-proj, &left);
            }
        }
        let mut col = q.column_mut(j);
        let norm = col.dot(&col).sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::Eigen("subspace collapsed during orthonormalization".into()));
        }
        col /= norm;
    }
    Ok(())
}

/// Lower bound on the spectrum from Gershgorin discs.
fn gershgorin_lower(a: ArrayView2<'_, f64>) -> f64 {
    a.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| 2.0 * row[i] - row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Applies the degree-`FILTER_DEGREE` Chebyshev polynomial that is bounded
/// by one on `[lower, cut]` and grows fast above `cut`. `ax` is `a * x`.
fn chebyshev_filter(a: ArrayView2<'_, f64>, x: Array2<f64>, ax: Array2<f64>, lower: f64, cut: f64) -> Array2<f64> {
    let e = 0.5 * (cut - lower);
    let c = 0.5 * (cut + lower);
    if !(e > 1e-12 * cut.abs().max(lower.abs()).max(1.0)) {
        return ax;
    }
    let mut prev = x;
    let mut cur = (&ax - &(&prev * c)) / e;
    for _ in 1..FILTER_DEGREE {
        let next = (&a.dot(&cur) - &(&cur * c)) * (2.0 / e) - &prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// The `k` algebraically largest eigenpairs of symmetric `a`.
///
/// Large problems use Chebyshev-filtered subspace iteration, which damps
/// everything below the smallest current Ritz value. Convergence still
/// depends on the gap after the wanted eigenvalues.
pub fn top_eigenpairs(a: ArrayView2<'_, f64>, k: usize) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!("matrix {:?} is not square", a.dim())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let p = (k + EXTRA_VECTORS).min(n);
    if n <= DENSE_LIMIT || 2 * p >= n {
        let (values, vectors) = dense_descending(a)?;
        return Ok(EigenPairs {
            values: values.slice(s![..k]).to_owned(),
            vectors: vectors.slice(s![.., ..k]).to_owned(),
        });
    }

    let mut rng = SeededRng::new(START_SEED);
    let mut q = Array2::from_shape_simple_fn((n, p), || rng.normal());
    orthonormalize(&mut q)?;
    let lower = gershgorin_lower(a);
    let mut values = Array1::zeros(p);
    for _ in 0..MAX_FILTERS {
        // Rayleigh-Ritz on the current basis.
        let z = a.dot(&q);
        let h = q.t().dot(&z);
        let h = (&h + &h.t()) * 0.5;
        let (theta, y) = dense_descending(h.view())?;
        let ritz = q.dot(&y);
        let az = z.dot(&y);
        let scale = theta[0].abs().max(1.0);
        let converged = (0..k).all(|i| {
            let r = &az.column(i) - &(&ritz.column(i) * theta[i]);
            r.dot(&r).sqrt() <= RESIDUAL_TOL * scale
        });
        values = theta;
        q = ritz;
        if converged {
            break;
        }
        q = chebyshev_filter(a, q, az, lower, values[p - 1]);
        orthonormalize(&mut q)?;
    }
    // The last Ritz basis is orthonormal up to rounding; sign-fix for determinism.
    let mut vectors = q.slice(s![.., ..k]).to_owned();
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(EigenPairs {
        values: values.slice(s![..k]).to_owned(),
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_psd(n: usize, rank: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        let b = Array2::from_shape_simple_fn((n, rank), || rng.normal());
        b.dot(&b.t())
    }

    fn check_pairs(a: &Array2<f64>, pairs: &EigenPairs, tol: f64) {
        for (i, &lambda) in pairs.values.iter().enumerate() {
            let v = pairs.vectors.column(i);
            let r = a.dot(&v) - &(&v * lambda);
            assert!(r.dot(&r).sqrt() < tol, "residual too large for pair {i}");
            assert!((v.dot(&v) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_path_matches_definition() {
        let a = random_psd(40, 40, 1);
        let pairs = top_eigenpairs(a.view(), 3).unwrap();
        check_pairs(&a, &pairs, 1e-8);
        assert!(pairs.values[0] >= pairs.values[1] && pairs.values[1] >= pairs.values[2]);
    }

    #[test]
    fn subspace_path_matches_dense_values() {
        // Low-rank PSD plus a scaled identity: strong gap after the top 4.
        let n = 700;
        let mut a = random_psd(n, 4, 2);
        for i in 0..n {
            a[[i, i]] += 1.0;
        }
        let pairs = top_eigenpairs(a.view(), 4).unwrap();
        check_pairs(&a, &pairs, 1e-6);
        let (dense, _) = dense_descending(a.view()).unwrap();
        for i in 0..4 {
            assert!((pairs.values[i] - dense[i]).abs() < 1e-8 * dense[0]);
        }
    }

    #[test]
    fn bad_requests() {
        let a = Array2::<f64>::eye(3);
        assert!(top_eigenpairs(a.view(), 0).is_err());
        assert!(top_eigenpairs(a.view(), 4).is_err());
        assert!(top_eigenpairs(Array2::<f64>::zeros((2, 3)).view(), 1).is_err());
    }
}
