//! Clustering accuracy: best one-to-one matching between predicted and
//! true labels, solved exactly with the Hungarian algorithm.

use crate::error::{Error, Result};
use crate::labels::LabelVector;

/// Minimum-cost perfect assignment for a square cost matrix.
/// Returns `assignment[row] = col`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation; column 0 is a sentinel.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for c in 1..=n {
                if !used[c] {
                    let cur = cost[r - 1][c - 1] - u[r] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = col0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        col1 = c;
                    }
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        assignment[owner[c] - 1] = c - 1;
    }
    assignment
}

/// Percentage of points whose predicted label maps onto the true label
/// under the best bijection between the two label sets.
pub fn clustering_accuracy(pred: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimMismatch(format!(
            "prediction has {} labels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Ok(100.0);
    }
    let size = pred.k().max(truth.k());
    let mut table = vec![vec![0i64; size]; size];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        table[p][t] += 1;
    }
    let cost: Vec<Vec<i64>> = table.iter().map(|row| row.iter().map(|&c| -c).collect()).collect();
    let matched: i64 = hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(p, &t)| table[p][t])
        .sum();
    Ok(100.0 * matched as f64 / pred.len() as f64)
}
