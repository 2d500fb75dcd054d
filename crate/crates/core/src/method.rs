//! The full clustering method (graph-regularized sparse NMF followed by a
//! normalized cut on the weighting map) and the three baselines it is
//! compared against.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cluster::{affinity, kmeans, normalized_cut, DEFAULT_ITERATIONS, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::factorize::{factorize, Factorization, FactorizeConfig};
use crate::graph::{knn_heat_graph, Bandwidth, NeighborGraph, DEFAULT_NEIGHBORS};
use crate::labels::LabelVector;
use crate::rng::SeededRng;

/// Neighbor graph settings: `neighbors` is κ and `bandwidth` is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub neighbors: usize,
    pub bandwidth: Bandwidth,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            neighbors: DEFAULT_NEIGHBORS,
            bandwidth: Bandwidth::Auto,
        }
    }
}

impl GraphConfig {
    pub fn build(&self, u: &Array2<f64>) -> Result<NeighborGraph> {
        knn_heat_graph(u, self.neighbors, self.bandwidth)
    }
}

/// Parameters of the full method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub factorize: FactorizeConfig,
    /// Inner rank K; `None` uses the cluster count.
    pub rank: Option<usize>,
    /// Affinity scale on weighting-map columns.
    pub sigma: f64,
    /// Use squared distances in the affinity exponent.
    pub squared: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            factorize: FactorizeConfig::default(),
            rank: None,
            sigma: 0.01,
            squared: false,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.factorize.validate()?;
        if self.rank == Some(0) {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Inner rank for `k` clusters on an `m x n` matrix, capped at
    /// `min(m, n)`.
    pub fn inner_rank(&self, k: usize, m: usize, n: usize) -> usize {
        self.rank.unwrap_or(k).min(m).min(n).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub factorization: Factorization,
    pub labels: LabelVector,
}

/// Factorizes `u` and partitions the columns of `W` into `k` groups with a
/// normalized cut. The same `rng` seeds initialization and k-means.
pub fn gsnmf_ncut(
    u: &Array2<f64>,
    g: &NeighborGraph,
    k: usize,
    cfg: &MethodConfig,
    rng: &mut SeededRng,
) -> Result<MethodOutput> {
    cfg.validate()?;
    let rank = cfg.inner_rank(k, u.nrows(), u.ncols());
    let factorization = factorize(u.view(), rank, g, &cfg.factorize, rng)?;
    let a = affinity(factorization.w.view(), cfg.sigma, cfg.squared)?;
    let labels = normalized_cut(&a, k, rng)?;
    Ok(MethodOutput { factorization, labels })
}

/// Factorizes `u` and runs k-means on the columns of `W`.
pub fn gsnmf_kmeans(
    u: &Array2<f64>,
    g: &NeighborGraph,
    k: usize,
    cfg: &MethodConfig,
    rng: &mut SeededRng,
) -> Result<MethodOutput> {
    cfg.validate()?;
    let rank = cfg.inner_rank(k, u.nrows(), u.ncols());
    let factorization = factorize(u.view(), rank, g, &cfg.factorize, rng)?;
    let labels = kmeans(factorization.w.t(), k, DEFAULT_RESTARTS, DEFAULT_ITERATIONS, rng)?.labels;
    Ok(MethodOutput { factorization, labels })
}

/// Median Euclidean distance between distinct columns, or 1 if all
/// columns coincide.
pub fn median_column_distance(u: ArrayView2<'_, f64>) -> f64 {
    let n = u.ncols();
    let cols: Vec<_> = u.columns().into_iter().collect();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| {
            cols[i]
                .iter()
                .zip(cols[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .filter(|&x| x > 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// The compared methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// k-means on the raw feature columns.
    Kmeans,
    /// Normalized cut on an affinity of the raw feature columns, with the
    /// scale set to the median column distance.
    Ncut,
    GsnmfKmeans,
    GsnmfNcut,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kmeans, Method::Ncut, Method::GsnmfKmeans, Method::GsnmfNcut];

    pub fn id(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Ncut => "ncut",
            Method::GsnmfKmeans => "gsnmf_kmeans",
            Method::GsnmfNcut => "gsnmf_ncut",
        }
    }

    pub fn needs_graph(self) -> bool {
        matches!(self, Method::GsnmfKmeans | Method::GsnmfNcut)
    }

    /// Parses a comma-separated list; `all` selects every method.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        if s.trim() == "all" {
            return Ok(Method::ALL.to_vec());
        }
        let mut out: Vec<Method> = s.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Clusters the columns of `u`. `g` is required by the factorizing
    /// methods. A single cluster is returned as is.
    pub fn run(
        self,
        u: &Array2<f64>,
        g: Option<&NeighborGraph>,
        k: usize,
        cfg: &MethodConfig,
        rng: &mut SeededRng,
    ) -> Result<LabelVector> {
        let need_graph = || g.ok_or_else(|| Error::InvalidArgument(format!("{self} needs a neighbor graph")));
        if k == 1 && u.ncols() > 0 {
            return Ok(LabelVector::new(vec![0; u.ncols()]));
        }
        match self {
            Method::Kmeans => Ok(kmeans(u.t(), k, DEFAULT_RESTARTS, DEFAULT_ITERATIONS, rng)?.labels),
            Method::Ncut => {
                let a = affinity(u.view(), median_column_distance(u.view()), false)?;
                normalized_cut(&a, k, rng)
            }
            Method::GsnmfKmeans => Ok(gsnmf_kmeans(u, need_graph()?, k, cfg, rng)?.labels),
            Method::GsnmfNcut => Ok(gsnmf_ncut(u, need_graph()?, k, cfg, rng)?.labels),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert!("spectral".parse::<Method>().is_err());
        assert_eq!(Method::parse_list("all").unwrap(), Method::ALL.to_vec());
        assert_eq!(
            Method::parse_list("ncut,kmeans,ncut").unwrap(),
            vec![Method::Kmeans, Method::Ncut]
        );
        assert!(Method::parse_list("kmeans,bogus").is_err());
    }

    #[test]
    fn rank_is_capped() {
        let cfg = MethodConfig::default();
        assert_eq!(cfg.inner_rank(7, 4, 100), 4);
        assert_eq!(cfg.inner_rank(3, 40, 100), 3);
        let fixed = MethodConfig {
            rank: Some(2),
            ..Default::default()
        };
        assert_eq!(fixed.inner_rank(5, 40, 100), 2);
    }

    #[test]
    fn median_distance() {
        let u = array![[0.0, 3.0, 0.0, 0.0], [0.0, 4.0, 1.0, 0.0]];
        // nonzero distances sorted: 1, 1, sqrt(18), 5, 5
        assert_eq!(median_column_distance(u.view()), 18f64.sqrt());
        assert_eq!(median_column_distance(Array2::<f64>::zeros((2, 3)).view()), 1.0);
    }

    #[test]
    fn graph_methods_need_graph() {
        let u = array![[1.0, 1.1, 5.0, 5.1], [1.0, 1.0, 2.0, 2.0]];
        let cfg = MethodConfig::default();
        let mut rng = SeededRng::new(0);
        assert!(Method::GsnmfNcut.run(&u, None, 2, &cfg, &mut rng).is_err());
        let l = Method::Kmeans.run(&u, None, 2, &cfg, &mut rng).unwrap();
        assert_eq!(l.labels()[0], l.labels()[1]);
        assert_ne!(l.labels()[0], l.labels()[2]);
    }
}
