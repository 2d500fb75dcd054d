//! End-to-end run driven by a JSON config.
//!
//! Stages: synthesize or ingest, optionally track phase volumes, build
//! features and the neighbor graph, pick `k` (fixed or by consensus),
//! factorize, cluster and score against ground truth when it is known.
//! Every stage writes its artifact into the output directory. A manifest
//! records the config hash, seed and crate version.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::clustering_accuracy;
use crate::error::{Error, Result};
use crate::factorize::{FactorizeConfig, Sparsity, DEFAULT_W_FLOOR};
use crate::features::{build_feature_matrix, FeatureMatrix, TrajectoryField};
use crate::labels::{load_labels, save_labels, LabelVector};
use crate::method::{gsnmf_ncut, GraphConfig, MethodConfig};
use crate::rng::SeededRng;
use crate::select::{select_k, SelectionReport, DEFAULT_K_RANGE, DEFAULT_RUNS};
use crate::synth::{synth_2d, synth_3d, Scenario, Synth2dOptions, Synth3dOptions};
use crate::tensor::{load_tensor, save_tensor, write_atomic, Tensor};
use crate::tracking::{fields_to_trajectories, load_phase_sequence, mask_from_tensor, register_sequence, TrackingParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Synthetic data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SynthSection {
    Synth3d {
        scenario: Scenario,
        #[serde(default = "default_grid_3d")]
        grid: usize,
        #[serde(default = "default_frames")]
        frames: usize,
    },
    Synth2d {
        k: usize,
        #[serde(default = "default_grid_2d")]
        grid: usize,
    },
}

fn default_grid_3d() -> usize {
    24
}

fn default_grid_2d() -> usize {
    64
}

fn default_frames() -> usize {
    11
}

/// File-based data source. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSection {
    /// `[P, L, 3]` trajectory tensor.
    Trajectories { path: PathBuf, labels: Option<PathBuf> },
    /// Ready-made feature matrix `U`.
    Features { path: PathBuf, labels: Option<PathBuf> },
    /// Directory of `phase_{x,y,z}_tNN.mtf` frames, tracked before use.
    Phases {
        dir: PathBuf,
        mask: Option<PathBuf>,
        labels: Option<PathBuf>,
        #[serde(default = "unit_spacing")]
        spacing: [f64; 3],
    },
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(flatten)]
    pub params: TrackingParams,
    /// Chain consecutive-frame registrations instead of registering every
    /// frame to the first.
    pub compose: bool,
}

impl Default for TrackingSection {
    fn default() -> Self {
        TrackingSection {
            params: TrackingParams::default(),
            compose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizeSection {
    /// Inner rank K; defaults to the cluster count.
    pub rank: Option<usize>,
    pub eta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub w_floor: f64,
    pub sparsity: Sparsity,
}

impl Default for FactorizeSection {
    fn default() -> Self {
        let d = FactorizeConfig::default();
        FactorizeSection {
            rank: None,
            eta: d.eta,
            lambda: d.lambda,
            max_iters: d.max_iters,
            rel_tol: d.rel_tol,
            w_floor: DEFAULT_W_FLOOR,
            sparsity: d.sparsity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub sigma: f64,
    pub squared: bool,
    /// Fixed cluster count; when absent `k` is chosen by consensus.
    pub k: Option<usize>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            sigma: MethodConfig::default().sigma,
            squared: false,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub k_min: usize,
    pub k_max: usize,
    pub runs: usize,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            k_min: DEFAULT_K_RANGE.0,
            k_max: DEFAULT_K_RANGE.1,
            runs: DEFAULT_RUNS,
        }
    }
}

/// Full pipeline configuration. `seed` is required; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub input: Option<InputSection>,
    #[serde(default)]
    pub tracking: Option<TrackingSection>,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub factorize: FactorizeSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub select: SelectSection,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative input paths against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.input {
            Some(InputSection::Trajectories { path, labels }) | Some(InputSection::Features { path, labels }) => {
                fix(path);
                labels.as_mut().map(fix);
            }
            Some(InputSection::Phases { dir, mask, labels, .. }) => {
                fix(dir);
                mask.as_mut().map(fix);
                labels.as_mut().map(fix);
            }
            None => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.synth, &self.input) {
            (Some(_), Some(_)) => return Err(Error::Config("give either \"synth\" or \"input\", not both".into())),
            (None, None) => return Err(Error::Config("one of \"synth\" or \"input\" is required".into())),
            _ => {}
        }
        if self.tracking.is_some() && !matches!(self.input, Some(InputSection::Phases { .. })) {
            return Err(Error::Config("\"tracking\" applies only to phase input".into()));
        }
        if let Some(t) = &self.tracking {
            t.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.method_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.graph.neighbors == 0 {
            return Err(Error::Config("graph.neighbors must be positive".into()));
        }
        if self.cluster.k.is_none() {
            let s = &self.select;
            if s.k_min < 2 || s.k_min > s.k_max || s.runs < 2 {
                return Err(Error::Config(format!(
                    "select needs 2 <= k_min <= k_max and runs >= 2, got {}..={} with {} runs",
                    s.k_min, s.k_max, s.runs
                )));
            }
        } else if self.cluster.k < Some(2) {
            return Err(Error::Config("cluster.k must be at least 2".into()));
        }
        Ok(())
    }

    pub fn method_config(&self) -> MethodConfig {
        let f = &self.factorize;
        MethodConfig {
            factorize: FactorizeConfig {
                eta: f.eta,
                lambda: f.lambda,
                max_iters: f.max_iters,
                rel_tol: f.rel_tol,
                w_floor: f.w_floor,
                sparsity: f.sparsity,
            },
            rank: f.rank,
            sigma: self.cluster.sigma,
            squared: self.cluster.squared,
        }
    }

    /// Canonical JSON of the parsed config (defaults filled in).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// SHA-256 of [`PipelineConfig::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Stage at which the pipeline stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Synth,
    Ingest,
    Track,
    Features,
    Graph,
    Select,
    Factorize,
    Cluster,
    Score,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Track => "track",
            Stage::Features => "features",
            Stage::Graph => "graph",
            Stage::Select => "select",
            Stage::Factorize => "factorize",
            Stage::Cluster => "cluster",
            Stage::Score => "score",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    /// 2 for config and usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.stage == Stage::Config || self.error.is_usage() {
            2
        } else {
            1
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub points: usize,
    pub feature_rows: usize,
    pub k: usize,
    pub rank: usize,
    pub selection: Option<SelectionReport>,
    pub iterations: usize,
    pub final_cost: f64,
    pub cluster_sizes: Vec<usize>,
    /// Clustering accuracy in percent, when ground truth is available.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub artifacts: Vec<String>,
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Output {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn tensor(&mut self, name: &str, t: &Tensor) -> Result<()> {
        let p = self.path(name);
        save_tensor(t, p)
    }

    fn text(&mut self, name: &str, s: &str) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, s.as_bytes())
    }
}

fn load_optional_labels(path: &Option<PathBuf>) -> Result<Option<LabelVector>> {
    path.as_ref().map(load_labels).transpose()
}

fn cost_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,cost\n");
    for (i, c) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{c}\n"));
    }
    s
}

/// Runs every stage and writes artifacts into `out_dir`. Artifacts of
/// completed stages stay on disk when a later stage fails.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: impl AsRef<Path>) -> std::result::Result<PipelineReport, StageError> {
    cfg.validate().at(Stage::Config)?;
    let dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)).at(Stage::Write)?;
    let mut out = Output { dir, artifacts: Vec::new() };
    let mut rng = SeededRng::new(cfg.seed);

    // data
    let (u, truth): (Array2<f64>, Option<LabelVector>) = if let Some(synth) = &cfg.synth {
        let data_seed = SeededRng::derive_seed(cfg.seed, &[0]);
        let d = match synth {
            SynthSection::Synth3d { scenario, grid, frames } => synth_3d(
                *scenario,
                [*grid; 3],
                &Synth3dOptions {
                    frames: *frames,
                    ..Default::default()
                },
                &mut SeededRng::new(data_seed),
            ),
            SynthSection::Synth2d { k, grid } => {
                synth_2d(*k, [*grid; 2], &Synth2dOptions::default(), &mut SeededRng::new(data_seed))
            }
        }
        .at(Stage::Synth)?;
        out.tensor("trajectories.mtf", &d.trajectories.to_tensor()).at(Stage::Write)?;
        let p = out.path("truth.csv");
        save_labels(&d.truth, p).at(Stage::Write)?;
        let u = features_of(&d.trajectories, &mut out)?;
        (u, Some(d.truth))
    } else {
        match cfg.input.as_ref().expect("validated") {
            InputSection::Trajectories { path, labels } => {
                let traj = load_tensor(path)
                    .and_then(|t| TrajectoryField::from_tensor(&t))
                    .at(Stage::Ingest)?;
                let truth = load_optional_labels(labels).at(Stage::Ingest)?;
                (features_of(&traj, &mut out)?, truth)
            }
            InputSection::Features { path, labels } => {
                let u = load_tensor(path)
                    .and_then(|t| FeatureMatrix::from_tensor(&t))
                    .at(Stage::Ingest)?
                    .into_matrix();
                (u, load_optional_labels(labels).at(Stage::Ingest)?)
            }
            InputSection::Phases {
                dir,
                mask,
                labels,
                spacing,
            } => {
                let frames = load_phase_sequence(dir).at(Stage::Ingest)?;
                let (x, y, z) = frames[0][0].dim();
                let mask = match mask {
                    Some(m) => load_tensor(m).and_then(|t| mask_from_tensor(&t)).at(Stage::Ingest)?,
                    None => ndarray::Array3::from_elem((x, y, z), true),
                };
                let truth = load_optional_labels(labels).at(Stage::Ingest)?;
                let tracking = cfg.tracking.clone().unwrap_or_default();
                let fields = register_sequence(&frames, *spacing, &tracking.params, tracking.compose).at(Stage::Track)?;
                for (t, f) in fields.iter().enumerate() {
                    let p = out.path(&format!("displacement_t{:02}.mtf", t + 2));
                    f.save(p).at(Stage::Write)?;
                }
                let traj = fields_to_trajectories(&fields, mask.view()).at(Stage::Track)?;
                out.tensor("trajectories.mtf", &traj.to_tensor()).at(Stage::Write)?;
                (features_of(&traj, &mut out)?, truth)
            }
        }
    };
    if let Some(t) = &truth {
        if t.len() != u.ncols() {
            return Err(Error::DimMismatch(format!(
                "{} ground-truth labels for {} points",
                t.len(),
                u.ncols()
            )))
            .at(Stage::Ingest);
        }
    }

    let g = cfg.graph.build(&u).at(Stage::Graph)?;
    let p = out.path("graph_edges.csv");
    g.save_edges_csv(p).at(Stage::Write)?;

    let method = cfg.method_config();
    let (k, selection) = match cfg.cluster.k {
        Some(k) => (k, None),
        None => {
            let sel = select_k(
                &u,
                &g,
                (cfg.select.k_min, cfg.select.k_max),
                cfg.select.runs,
                &method,
                SeededRng::derive_seed(cfg.seed, &[1]),
            )
            .at(Stage::Select)?;
            let p = out.path("selection.json");
            sel.report.save(&p).at(Stage::Write)?;
            out.artifacts.push("selection.csv".into());
            (sel.report.best_k, Some(sel.report))
        }
    };

    let result = gsnmf_ncut(&u, &g, k, &method, &mut rng).at(Stage::Cluster)?;
    let f = &result.factorization;
    out.tensor("V.mtf", &Tensor::from_array2(f.v.view()).at(Stage::Write)?)
        .at(Stage::Write)?;
    out.tensor("W.mtf", &Tensor::from_array2(f.w.view()).at(Stage::Write)?)
        .at(Stage::Write)?;
    out.text("cost.csv", &cost_csv(&f.cost_trace)).at(Stage::Write)?;
    let p = out.path("labels.csv");
    save_labels(&result.labels, p).at(Stage::Write)?;

    let accuracy = truth
        .as_ref()
        .map(|t| clustering_accuracy(&result.labels, t))
        .transpose()
        .at(Stage::Score)?;
    let mut cluster_sizes = vec![0; result.labels.k()];
    for &l in result.labels.labels() {
        cluster_sizes[l] += 1;
    }
    let report = PipelineReport {
        points: u.ncols(),
        feature_rows: u.nrows(),
        k,
        rank: f.rank(),
        selection,
        iterations: f.iterations,
        final_cost: *f.cost_trace.last().unwrap_or(&f64::NAN),
        cluster_sizes,
        accuracy,
    };
    let json = serde_json::to_string_pretty(&report).expect("plain data serializes");
    out.text("report.json", &json).at(Stage::Write)?;

    out.artifacts.push("manifest.json".into());
    let manifest = Manifest {
        version: VERSION.to_string(),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        config: cfg.clone(),
        artifacts: out.artifacts.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
    write_atomic(&out.dir.join("manifest.json"), json.as_bytes()).at(Stage::Write)?;
    Ok(report)
}

fn features_of(traj: &TrajectoryField, out: &mut Output) -> std::result::Result<Array2<f64>, StageError> {
    let u = build_feature_matrix(traj).at(Stage::Features)?;
    out.tensor("features.mtf", &u.to_tensor()).at(Stage::Write)?;
    Ok(u.into_matrix())
}
