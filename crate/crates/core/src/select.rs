//! Consensus model selection over the number of clusters.
//!
//! For every candidate `k` the full method is run repeatedly with derived
//! seeds. The co-membership indicators of all runs are averaged into a
//! consensus matrix, and its dispersion `ρ = (1/n²) Σ 4(c̃_ij − ½)²` scores how
//! reproducible the partition is. The `k` with the largest `ρ` wins, with
//! ties going to the smaller `k`.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::labels::LabelVector;
use crate::method::{gsnmf_ncut, MethodConfig};
use crate::rng::SeededRng;
use crate::tensor::write_atomic;

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_K_RANGE: (usize, usize) = (2, 5);

/// Binary co-membership matrix: 1 where two samples share a label.
pub fn connectivity_matrix(labels: &LabelVector) -> Array2<f64> {
    let l = labels.labels();
    Array2::from_shape_fn((l.len(), l.len()), |(i, j)| if l[i] == l[j] { 1.0 } else { 0.0 })
}

/// Run-averaged connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    c: Array2<f64>,
    runs: usize,
}

impl ConsensusMatrix {
    /// Validates symmetry, the `[0, 1]` range and the unit diagonal.
    pub fn new(c: Array2<f64>, runs: usize) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::DimMismatch(format!("consensus {:?} is not square", c.dim())));
        }
        if runs == 0 {
            return Err(Error::InvalidArgument("consensus needs at least one run".into()));
        }
        for i in 0..n {
            if c[[i, i]] != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let v = c[[i, j]];
                if v != c[[j, i]] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) = {v} breaks symmetry or [0, 1] range"
                    )));
                }
            }
        }
        Ok(ConsensusMatrix { c, runs })
    }

    /// Averages the connectivity of each partition. Entries are exact
    /// multiples of `1 / runs`.
    pub fn from_partitions(partitions: &[LabelVector]) -> Result<Self> {
        let first = partitions
            .first()
            .ok_or_else(|| Error::InvalidArgument("no partitions to average".into()))?;
        let n = first.len();
        let mut counts = Array2::<u32>::zeros((n, n));
        for p in partitions {
            if p.len() != n {
                return Err(Error::DimMismatch(format!("partition of {} samples, expected {n}", p.len())));
            }
            let l = p.labels();
            for i in 0..n {
                for j in 0..n {
                    if l[i] == l[j] {
                        counts[[i, j]] += 1;
                    }
                }
            }
        }
        let runs = partitions.len();
        Ok(ConsensusMatrix {
            c: counts.mapv(|c| c as f64 / runs as f64),
            runs,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.c
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }
}

/// Dispersion coefficient in `[0, 1]`; 1 for a binary consensus.
pub fn dispersion(c: &ConsensusMatrix) -> f64 {
    dispersion_of(c.c.view())
}

/// Dispersion of any square matrix with entries in `[0, 1]`, without the
/// consensus invariants.
pub fn dispersion_of(c: ArrayView2<'_, f64>) -> f64 {
    let n = c.nrows() as f64;
    c.iter().map(|&v| 4.0 * (v - 0.5) * (v - 0.5)).sum::<f64>() / (n * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEntry {
    pub k: usize,
    pub rho: f64,
}

/// Outcome of [`select_k`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub best_k: usize,
    pub rho: Vec<RhoEntry>,
    pub runs: usize,
    pub master_seed: u64,
    /// Runs that failed once and succeeded on the retry seed, as `(k, run)`.
    pub retried: Vec<(usize, usize)>,
}

impl SelectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// `k,rho` lines for plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,rho\n");
        for e in &self.rho {
            s.push_str(&format!("{},{}\n", e.k, e.rho));
        }
        s
    }

    pub fn save(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        write_atomic(json_path, self.to_json().as_bytes())?;
        write_atomic(&json_path.with_extension("csv"), self.to_csv().as_bytes())
    }
}

/// Full result including the consensus matrix of every candidate.
#[derive(Debug, Clone)]
pub struct Selection {
    pub report: SelectionReport,
    pub consensus: Vec<(usize, ConsensusMatrix)>,
}

/// Seed of run `run` for `k`; `attempt` 1 is the retry seed.
pub fn run_seed(master_seed: u64, k: usize, run: usize, attempt: u64) -> u64 {
    let mut path = vec![k as u64, run as u64];
    if attempt > 0 {
        path.push(attempt);
    }
    SeededRng::derive_seed(master_seed, &path)
}

/// Picks the number of clusters in `k_min..=k_max` by consensus
/// dispersion.
pub fn select_k(
    u: &Array2<f64>,
    g: &NeighborGraph,
    k_range: (usize, usize),
    runs: usize,
    cfg: &MethodConfig,
    master_seed: u64,
) -> Result<Selection> {
    let (k_min, k_max) = k_range;
    if k_min < 2 || k_min > k_max {
        return Err(Error::InvalidArgument(format!(
            "k range {k_min}..={k_max} must be non-empty and start at 2 or more"
        )));
    }
    if k_max > u.ncols() {
        return Err(Error::InvalidArgument(format!(
            "k_max = {k_max} exceeds the {} samples",
            u.ncols()
        )));
    }
    if runs < 2 {
        return Err(Error::InvalidArgument(format!("runs = {runs} must be at least 2")));
    }
    cfg.validate()?;

    let tasks: Vec<(usize, usize)> = (k_min..=k_max)
        .flat_map(|k| (0..runs).map(move |r| (k, r)))
        .collect();
    let outcomes: Vec<Result<(LabelVector, bool)>> = tasks
        .par_iter()
        .map(|&(k, run)| {
            let attempt = |a: u64| {
                let mut rng = SeededRng::new(run_seed(master_seed, k, run, a));
                gsnmf_ncut(u, g, k, cfg, &mut rng).map(|o| o.labels)
            };
            match attempt(0) {
                Ok(l) => Ok((l, false)),
                Err(_) => attempt(1).map(|l| (l, true)).map_err(|e| Error::SelectionRun {
                    k,
                    run,
                    reason: e.to_string(),
                }),
            }
        })
        .collect();

    let mut rho = Vec::new();
    let mut consensus = Vec::new();
    let mut retried = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for k in k_min..=k_max {
        let mut partitions = Vec::with_capacity(runs);
        for run in 0..runs {
            let (labels, was_retried) = outcomes.next().expect("one outcome per task")?;
            if was_retried {
                retried.push((k, run));
            }
            partitions.push(labels);
        }
        let c = ConsensusMatrix::from_partitions(&partitions)?;
        rho.push(RhoEntry { k, rho: dispersion(&c) });
        consensus.push((k, c));
    }
    let best_k = rho
        .iter()
        .fold(None::<RhoEntry>, |best, &e| match best {
            Some(b) if b.rho >= e.rho => Some(b),
            _ => Some(e),
        })
        .expect("non-empty range")
        .k;
    Ok(Selection {
        report: SelectionReport {
            best_k,
            rho,
            runs,
            master_seed,
            retried,
        },
        consensus,
    })
}
