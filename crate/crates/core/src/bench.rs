//! Accuracy benchmark of the full method against its baselines on labelled
//! datasets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::clustering_accuracy;
use crate::error::{Error, Result};
use crate::factorize::FactorizeConfig;
use crate::features::{build_feature_matrix, FeatureMatrix};
use crate::labels::{load_labels, LabelVector};
use crate::method::{GraphConfig, Method, MethodConfig};
use crate::rng::SeededRng;
use crate::synth::{synth_2d, synth_3d, Scenario, Synth2dOptions, Synth3dOptions};
use crate::tensor::{load_tensor, write_atomic};

pub const DEFAULT_3D_GRID: usize = 24;
pub const DEFAULT_2D_GRID: usize = 64;

/// Where benchmark data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// `synth3d:<A|B|C|D>[:grid]`
    Synth3d { scenario: Scenario, grid: usize },
    /// `synth2d:<k>[:grid]`
    Synth2d { k: usize, grid: usize },
    /// `files:<features.mtf>,<labels.csv>`
    Files { features: PathBuf, labels: PathBuf },
}

/// Feature matrix plus ground truth.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub u: Array2<f64>,
    pub truth: LabelVector,
}

impl DatasetSpec {
    /// Builds the dataset. Synthetic data draws its jitter from `seed`.
    pub fn load(&self, seed: u64) -> Result<LabeledData> {
        let mut rng = SeededRng::new(seed);
        let (traj, truth) = match self {
            DatasetSpec::Synth3d { scenario, grid } => {
                let d = synth_3d(*scenario, [*grid; 3], &Synth3dOptions::default(), &mut rng)?;
                (d.trajectories, d.truth)
            }
            DatasetSpec::Synth2d { k, grid } => {
                let d = synth_2d(*k, [*grid; 2], &Synth2dOptions::default(), &mut rng)?;
                (d.trajectories, d.truth)
            }
            DatasetSpec::Files { features, labels } => {
                let u = FeatureMatrix::from_tensor(&load_tensor(features)?)?.into_matrix();
                let truth = load_labels(labels)?;
                if truth.len() != u.ncols() {
                    return Err(Error::DimMismatch(format!(
                        "{} labels for {} feature columns",
                        truth.len(),
                        u.ncols()
                    )));
                }
                return Ok(LabeledData { u, truth });
            }
        };
        Ok(LabeledData {
            u: build_feature_matrix(&traj)?.into_matrix(),
            truth,
        })
    }

    /// Parameters tuned for the dataset family: η = λ = 100, σ = 0.01 for 3D
    /// and external data; η = 0.1, λ = 8, σ = 0.3 for the two-frame 2D data.
    pub fn default_method_config(&self) -> MethodConfig {
        match self {
            DatasetSpec::Synth2d { .. } => MethodConfig {
                factorize: FactorizeConfig {
                    eta: 0.1,
                    lambda: 8.0,
                    ..Default::default()
                },
                sigma: 0.3,
                ..Default::default()
            },
            _ => MethodConfig::default(),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Synth3d { scenario, grid } if *grid == DEFAULT_3D_GRID => write!(f, "synth3d:{scenario}"),
            DatasetSpec::Synth3d { scenario, grid } => write!(f, "synth3d:{scenario}:{grid}"),
            DatasetSpec::Synth2d { k, grid } if *grid == DEFAULT_2D_GRID => write!(f, "synth2d:{k}"),
            DatasetSpec::Synth2d { k, grid } => write!(f, "synth2d:{k}:{grid}"),
            DatasetSpec::Files { features, labels } => {
                write!(f, "files:{},{}", features.display(), labels.display())
            }
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown dataset {s:?}"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let grid = |g: Option<&str>, default: usize| -> Result<usize> {
            g.map_or(Ok(default), |g| g.parse().map_err(|_| bad()))
        };
        match kind {
            "synth3d" => {
                let mut parts = rest.split(':');
                let scenario = parts.next().ok_or_else(bad)?.parse()?;
                let grid = grid(parts.next(), DEFAULT_3D_GRID)?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(DatasetSpec::Synth3d { scenario, grid })
            }
            "synth2d" => {
                let mut parts = rest.split(':');
                let k = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let grid = grid(parts.next(), DEFAULT_2D_GRID)?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(DatasetSpec::Synth2d { k, grid })
            }
            "files" => {
                let (features, labels) = rest.split_once(',').ok_or_else(bad)?;
                Ok(DatasetSpec::Files {
                    features: features.into(),
                    labels: labels.into(),
                })
            }
            _ => Err(bad()),
        }
    }
}

/// One method on one dataset with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub dataset: String,
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    /// Clustering accuracy in percent.
    pub ac: f64,
    pub seconds: f64,
}

/// Runs every method for every seed. `k` defaults to the number of true
/// labels and `cfg` to the dataset's tuned parameters. Results are sorted
/// by method, then seed.
pub fn run_benchmark(
    dataset: &DatasetSpec,
    methods: &[Method],
    k: Option<usize>,
    cfg: Option<&MethodConfig>,
    graph: &GraphConfig,
    seeds: &[u64],
) -> Result<Vec<BenchResult>> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    let default_cfg;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            default_cfg = dataset.default_method_config();
            &default_cfg
        }
    };
    let id = dataset.to_string();
    let mut results = Vec::new();
    for &seed in seeds {
        let data = dataset.load(seed)?;
        let k = k.unwrap_or(data.truth.k()).max(1);
        let started = Instant::now();
        let g = if methods.iter().any(|m| m.needs_graph()) {
            Some(graph.build(&data.u)?)
        } else {
            None
        };
        let graph_seconds = started.elapsed().as_secs_f64();
        let runs: Vec<BenchResult> = methods
            .par_iter()
            .map(|&method| {
                let started = Instant::now();
                let mut rng = SeededRng::new(seed);
                let labels = method.run(&data.u, g.as_ref(), k, cfg, &mut rng)?;
                let mut seconds = started.elapsed().as_secs_f64();
                if method.needs_graph() {
                    seconds += graph_seconds;
                }
                Ok(BenchResult {
                    dataset: id.clone(),
                    method,
                    k,
                    seed,
                    ac: clustering_accuracy(&labels, &data.truth)?,
                    seconds,
                })
            })
            .collect::<Result<_>>()?;
        results.extend(runs);
    }
    results.sort_by(|a, b| {
        (&a.dataset, a.method, a.k, a.seed).cmp(&(&b.dataset, b.method, b.k, b.seed))
    });
    Ok(results)
}

/// Median AC of `method` across the results.
pub fn median_ac(results: &[BenchResult], method: Method) -> Option<f64> {
    let mut acs: Vec<f64> = results.iter().filter(|r| r.method == method).map(|r| r.ac).collect();
    if acs.is_empty() {
        return None;
    }
    acs.sort_by(f64::total_cmp);
    let n = acs.len();
    Some(if n % 2 == 1 {
        acs[n / 2]
    } else {
        0.5 * (acs[n / 2 - 1] + acs[n / 2])
    })
}

pub fn results_to_csv(results: &[BenchResult]) -> String {
    let mut s = String::from("dataset,method,k,seed,ac,seconds\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            r.dataset, r.method, r.k, r.seed, r.ac, r.seconds
        ));
    }
    s
}

pub fn save_results_csv(results: &[BenchResult], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), results_to_csv(results).as_bytes())
}

/// Parses `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}
