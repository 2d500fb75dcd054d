//! k-nearest-neighbour heat-kernel graph over feature columns and its
//! Laplacian `L = D - Q`, kept in sparse form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::write_atomic;

pub const DEFAULT_NEIGHBORS: usize = 5;

/// Heat-kernel bandwidth `t` in `exp(-d^2 / t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Mean squared distance over the selected edges.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Sparse symmetric neighbour graph. Each undirected edge is stored once
/// with `i < j`; the adjacency lists hold both directions.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Array1<f64>,
    neighbors: usize,
    bandwidth: f64,
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborGraph {
    /// Builds a graph from an explicit undirected edge list. Duplicate
    /// pairs keep the last weight; self loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut unique = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge weight {w} must be finite and >= 0")));
            }
            unique.insert((a.min(b), a.max(b)), w);
        }
        let edges: Vec<Edge> = unique
            .into_iter()
            .map(|((i, j), weight)| Edge { i, j, weight })
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.i].push((e.j, e.weight));
            adjacency[e.j].push((e.i, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        let degrees = adjacency
            .iter()
            .map(|list| list.iter().map(|&(_, w)| w).sum())
            .collect();
        Ok(NeighborGraph {
            n,
            edges,
            adjacency,
            degrees,
            neighbors: 0,
            bandwidth: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    /// The bandwidth `t` actually used (NaN for hand-built graphs).
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `q_ij`, zero when there is no edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |pos| self.adjacency[i][pos].1)
    }

    pub fn dense_q(&self) -> Array2<f64> {
        let mut q = Array2::zeros((self.n, self.n));
        for e in &self.edges {
            q[[e.i, e.j]] = e.weight;
            q[[e.j, e.i]] = e.weight;
        }
        q
    }

    pub fn dense_laplacian(&self) -> Array2<f64> {
        let mut l = -self.dense_q();
        for (i, &d) in self.degrees.iter().enumerate() {
            l[[i, i]] += d;
        }
        l
    }

    /// `W Q` for a `K x n` matrix `W`.
    pub fn right_mul_q(&self, w: ArrayView2<'_, f64>) -> Array2<f64> {
        let (k, n) = w.dim();
        assert_eq!(n, self.n, "W has {n} columns, graph has {} nodes", self.n);
        let mut out = Array2::zeros((k, n));
        for (j, list) in self.adjacency.iter().enumerate() {
            for &(l, q) in list {
                for r in 0..k {
                    out[[r, j]] += w[[r, l]] * q;
                }
            }
        }
        out
    }

    /// `W D` for a `K x n` matrix `W`.
    pub fn right_mul_d(&self, w: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = w.to_owned();
        for (mut col, &d) in out.columns_mut().into_iter().zip(self.degrees.iter()) {
            col *= d;
        }
        out
    }

    /// Writes the edge list as `i,j,weight` lines, one per undirected edge.
    pub fn save_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::from("i,j,weight\n");
        for e in &self.edges {
            writeln!(s, "{},{},{:e}", e.i, e.j, e.weight).unwrap();
        }
        write_atomic(path.as_ref(), s.as_bytes())
    }
}

/// Connects each column of `u` to its `neighbors` nearest columns
/// (Euclidean), symmetrizes by union and weights edges with
/// `exp(-|u_i - u_j|^2 / t)`.
pub fn knn_heat_graph(u: &Array2<f64>, neighbors: usize, bandwidth: Bandwidth) -> Result<NeighborGraph> {
    let n = u.ncols();
    if neighbors == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    if n <= neighbors {
        return Err(Error::InvalidArgument(format!(
            "need more than {neighbors} columns for a {neighbors}-NN graph, got {n}"
        )));
    }
    if let Bandwidth::Fixed(t) = bandwidth {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth {t} must be positive")));
        }
    }
    let cols: Vec<ArrayView1<'_, f64>> = u.columns().into_iter().collect();
    let nearest: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, squared_distance(cols[i], cols[j])))
                .collect();
            d.select_nth_unstable_by(neighbors - 1, |a, b| {
                a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
            });
            d.truncate(neighbors);
            d
        })
        .collect();

    let mut pairs = BTreeMap::new();
    for (i, list) in nearest.iter().enumerate() {
        for &(j, d2) in list {
            pairs.insert((i.min(j), i.max(j)), d2);
        }
    }
    let t = match bandwidth {
        Bandwidth::Fixed(t) => t,
        Bandwidth::Auto => {
            let mean = pairs.values().sum::<f64>() / pairs.len() as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };
    let mut g = NeighborGraph::from_edges(
        n,
        pairs.into_iter().map(|((i, j), d2)| (i, j, (-d2 / t).exp())),
    )?;
    g.neighbors = neighbors;
    g.bandwidth = t;
    Ok(g)
}

/// `w^T L w`, evaluated through the pairwise form
/// `1/2 sum_ij q_ij (w_i - w_j)^2`.
pub fn laplacian_quadratic(w: ArrayView1<'_, f64>, g: &NeighborGraph) -> Result<f64> {
    if w.len() != g.n {
        return Err(Error::DimMismatch(format!(
            "vector length {} vs graph size {}",
            w.len(),
            g.n
        )));
    }
    Ok(g.edges
        .iter()
        .map(|e| {
            let diff = w[e.i] - w[e.j];
            e.weight * diff * diff
        })
        .sum())
}

/// `Tr(W L W^T)` for a `K x n` matrix.
pub fn trace_wlw(w: ArrayView2<'_, f64>, g: &NeighborGraph) -> Result<f64> {
    w.rows()
        .into_iter()
        .map(|row| laplacian_quadratic(row, g))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::array;

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(0.0, 10.0))
    }

    #[test]
    fn identical_columns_weight_one() {
        let u = array![[1.0, 1.0, 5.0], [2.0, 2.0, 0.0]];
        let g = knn_heat_graph(&u, 1, Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn equilateral_triangle_is_complete_and_uniform() {
        let h = 3f64.sqrt() / 2.0;
        let u = array![[0.0, 1.0, 0.5], [0.0, 0.0, h]];
        let g = knn_heat_graph(&u, 2, Bandwidth::Auto).unwrap();
        assert_eq!(g.edges().len(), 3);
        let w0 = g.edges()[0].weight;
        for e in g.edges() {
            assert!((e.weight - w0).abs() < 1e-12);
        }
    }

    #[test]
    fn line_graph_weights_by_hand() {
        // Points at 0, 1, 3, 6 on a line, 1-NN each:
        // 0->1, 1->0, 3->1 (d=2 vs 3), 6->3.
        let u = array![[0.0, 1.0, 3.0, 6.0]];
        let g = knn_heat_graph(&u, 1, Bandwidth::Fixed(1.0)).unwrap();
        let got: Vec<(usize, usize, f64)> =
            g.edges().iter().map(|e| (e.i, e.j, e.weight)).collect();
        assert_eq!(
            got,
            vec![
                (0, 1, (-1.0f64).exp()),
                (1, 2, (-4.0f64).exp()),
                (2, 3, (-9.0f64).exp())
            ]
        );
        assert_eq!(g.degrees()[1], (-1.0f64).exp() + (-4.0f64).exp());
    }

    #[test]
    fn too_few_columns() {
        let u = array![[0.0, 1.0]];
        assert!(knn_heat_graph(&u, 2, Bandwidth::Auto).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let g = NeighborGraph::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(laplacian_quadratic(array![1.0, 0.0, 0.0].view(), &g).unwrap(), 1.0);
        assert_eq!(laplacian_quadratic(array![2.5, 2.5, 2.5].view(), &g).unwrap(), 0.0);
        assert!(laplacian_quadratic(array![1.0].view(), &g).is_err());
    }

    #[test]
    fn quadratic_matches_matrix_form() {
        let mut rng = SeededRng::new(11);
        let u = random_matrix(4, 30, &mut rng);
        let g = knn_heat_graph(&u, 4, Bandwidth::Auto).unwrap();
        let l = g.dense_laplacian();
        let w = Array1::from_shape_fn(30, |_| rng.normal());
        let matrix_form = w.dot(&l.dot(&w));
        let pairwise = laplacian_quadratic(w.view(), &g).unwrap();
        assert!((matrix_form - pairwise).abs() <= 1e-10 * matrix_form.abs().max(1.0));
    }

    #[test]
    fn products_match_dense() {
        let mut rng = SeededRng::new(5);
        let u = random_matrix(3, 12, &mut rng);
        let g = knn_heat_graph(&u, 3, Bandwidth::Auto).unwrap();
        let w = random_matrix(2, 12, &mut rng);
        let q = g.dense_q();
        let d = Array2::from_diag(g.degrees());
        let wq = g.right_mul_q(w.view());
        let wd = g.right_mul_d(w.view());
        for (a, b) in wq.iter().zip(w.dot(&q).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in wd.iter().zip(w.dot(&d).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        NeighborGraph::from_edges(3, [(2, 0, 0.5)])
            .unwrap()
            .save_edges_csv(&path)
            .unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "i,j,weight\n0,2,5e-1\n");
    }
}
