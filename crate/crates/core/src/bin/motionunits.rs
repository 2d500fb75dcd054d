use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array3;

use motionunits::bench::{median_ac, parse_seeds, run_benchmark, save_results_csv, DatasetSpec};
use motionunits::cluster::{affinity, clustering_accuracy, normalized_cut};
use motionunits::factorize::{factorize, FactorizeConfig, Sparsity};
use motionunits::features::{build_feature_matrix, FeatureMatrix, TrajectoryField};
use motionunits::graph::{Bandwidth, DEFAULT_NEIGHBORS};
use motionunits::labels::{load_labels, save_labels};
use motionunits::method::{GraphConfig, Method, MethodConfig};
use motionunits::pipeline::{run_pipeline, PipelineConfig};
use motionunits::rng::SeededRng;
use motionunits::select::select_k;
use motionunits::synth::{synth_2d, synth_3d, Axis, Motion, Scenario, Synth2dOptions, Synth3dOptions};
use motionunits::tensor::{load_tensor, save_tensor, write_atomic, Tensor};
use motionunits::tracking::{
    fields_to_trajectories, load_phase_sequence, mask_from_tensor, mask_to_tensor, register_sequence,
    rigid_phase_sequence, save_phase_sequence, tag_wavevectors, TrackingParams,
};
use motionunits::{Error, Result};

#[derive(Parser)]
#[command(name = "motionunits", version, about = "Functional-unit discovery in dense motion trajectories")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Register a phase-volume sequence and write displacement fields.
    Track(TrackArgs),
    /// Build the rescaled feature matrix U from trajectories.
    Features(FeaturesArgs),
    /// Graph-regularized sparse NMF of U.
    Factorize(FactorizeArgs),
    /// Normalized-cut clustering of the columns of W.
    Cluster(ClusterArgs),
    /// Choose the number of clusters by consensus dispersion.
    SelectK(SelectArgs),
    /// Clustering accuracy of predicted labels against ground truth.
    Accuracy(AccuracyArgs),
    /// Compare the four methods on a labeled dataset.
    Bench(BenchArgs),
    /// Run every stage from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Two-muscle tongue-like 3D scenario.
    #[command(name = "3d")]
    ThreeD {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 24)]
        grid: usize,
        #[arg(long, default_value_t = 11)]
        frames: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// File stem for the .mtf/.csv/.json outputs.
        #[arg(long, default_value = "synth")]
        stem: String,
    },
    /// 2D region dataset with k motion directions.
    #[command(name = "2d")]
    TwoD {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        stem: String,
    },
    /// Wrapped tag-phase volumes of a rigid motion.
    Phases {
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Total translation "x,y,z" in voxels.
        #[arg(long, value_parser = parse_triple, conflicts_with = "rotate_x")]
        translate: Option<[f64; 3]>,
        /// Total rotation about the x axis through the grid center, radians.
        #[arg(long, allow_hyphen_values = true)]
        rotate_x: Option<f64>,
        /// Tag wavelength in voxels.
        #[arg(long, default_value_t = 8.0)]
        wavelength: f64,
        /// Mask margin: voxels closer than this to a face are excluded.
        #[arg(long, default_value_t = 4)]
        margin: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of phase_{x,y,z}_tNN.mtf volumes.
    #[arg(long)]
    phases: PathBuf,
    /// Displacement output. With more than two frames one file per frame is
    /// written as <stem>_tNN.<ext>.
    #[arg(long)]
    out: PathBuf,
    /// Mask tensor selecting tracked points for --traj (default: all voxels).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Also write the [P, L, 3] trajectory tensor.
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Chain consecutive-frame registrations.
    #[arg(long)]
    compose: bool,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    spacing: [f64; 3],
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NmfArgs {
    /// Sparsity weight (L1/2 or L1 penalty).
    #[arg(long, default_value_t = 100.0)]
    eta: f64,
    /// Graph-regularization weight.
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Sparsity penalty: lhalf or l1.
    #[arg(long, default_value = "lhalf", value_parser = parse_sparsity)]
    sparsity: Sparsity,
    /// Neighbors per point in the feature graph.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Heat-kernel bandwidth (default: automatic).
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl NmfArgs {
    fn factorize_config(&self) -> FactorizeConfig {
        FactorizeConfig {
            eta: self.eta,
            lambda: self.lambda,
            max_iters: self.iters,
            rel_tol: self.tol,
            sparsity: self.sparsity,
            ..Default::default()
        }
    }

    fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            neighbors: self.neighbors,
            bandwidth: self.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed),
        }
    }
}

#[derive(Args)]
struct FactorizeArgs {
    #[arg(long)]
    u: PathBuf,
    /// Inner rank.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_v: PathBuf,
    #[arg(long)]
    out_w: PathBuf,
    /// Per-iteration cost CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    nmf: NmfArgs,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Use squared distances in the affinity.
    #[arg(long)]
    squared: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    u: PathBuf,
    #[arg(long, default_value_t = 2)]
    kmin: usize,
    #[arg(long, default_value_t = 5)]
    kmax: usize,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// JSON report; the rho table is written beside it as .csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[command(flatten)]
    nmf: NmfArgs,
}

#[derive(Args)]
struct AccuracyArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// synth3d:<A-D>[:grid], synth2d:<k>[:grid] or files:<U.mtf>,<labels.csv>
    #[arg(long)]
    dataset: String,
    /// Comma-separated method ids or "all".
    #[arg(long, default_value = "all")]
    methods: String,
    /// "a..b" (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..5")]
    seeds: String,
    /// Cluster count (default: the dataset's number of true labels).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the cluster count and skips model selection.
    #[arg(long)]
    k: Option<usize>,
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected three comma-separated numbers, got {s:?}"))
}

fn parse_sparsity(s: &str) -> std::result::Result<Sparsity, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown sparsity {s:?}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(cmd) => synth(cmd),
        Command::Track(a) => track(a),
        Command::Features(a) => {
            let traj = TrajectoryField::from_tensor(&load_tensor(&a.traj)?)?;
            save_tensor(&build_feature_matrix(&traj)?.to_tensor(), &a.out)
        }
        Command::Factorize(a) => {
            let u = FeatureMatrix::from_tensor(&load_tensor(&a.u)?)?.into_matrix();
            let g = a.nmf.graph_config().build(&u)?;
            let f = factorize(u.view(), a.k, &g, &a.nmf.factorize_config(), &mut SeededRng::new(a.seed))?;
            save_tensor(&Tensor::from_array2(f.v.view())?, &a.out_v)?;
            save_tensor(&Tensor::from_array2(f.w.view())?, &a.out_w)?;
            if let Some(p) = a.trace {
                let mut s = String::from("iteration,cost\n");
                for (i, c) in f.cost_trace.iter().enumerate() {
                    s.push_str(&format!("{i},{c}\n"));
                }
                write_atomic(&p, s.as_bytes())?;
            }
            println!("iterations {} final cost {}", f.iterations, f.cost_trace.last().unwrap_or(&f64::NAN));
            Ok(())
        }
        Command::Cluster(a) => {
            let w = load_tensor(&a.w)?.to_array2()?;
            let aff = affinity(w.view(), a.sigma, a.squared)?;
            let labels = normalized_cut(&aff, a.k, &mut SeededRng::new(a.seed))?;
            save_labels(&labels, &a.out)
        }
        Command::SelectK(a) => {
            let u = FeatureMatrix::from_tensor(&load_tensor(&a.u)?)?.into_matrix();
            let g = a.nmf.graph_config().build(&u)?;
            let cfg = MethodConfig {
                factorize: a.nmf.factorize_config(),
                sigma: a.sigma,
                ..Default::default()
            };
            let sel = select_k(&u, &g, (a.kmin, a.kmax), a.runs, &cfg, a.seed)?;
            sel.report.save(&a.out)?;
            for e in &sel.report.rho {
                println!("k = {}  rho = {:.6}", e.k, e.rho);
            }
            println!("selected k = {}", sel.report.best_k);
            Ok(())
        }
        Command::Accuracy(a) => {
            let ac = clustering_accuracy(&load_labels(&a.pred)?, &load_labels(&a.truth)?)?;
            println!("{ac}");
            Ok(())
        }
        Command::Bench(a) => bench(a),
        Command::Pipeline(a) => unreachable!("handled in main: {:?}", a.config),
    }
}

fn synth(cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::ThreeD {
            scenario,
            grid,
            frames,
            seed,
            out,
            stem,
        } => {
            let opts = Synth3dOptions {
                frames,
                ..Default::default()
            };
            let d = synth_3d(scenario, [grid; 3], &opts, &mut SeededRng::new(seed))?;
            d.save(&out, &stem)?;
            println!("{} points, {} frames", d.trajectories.points(), d.trajectories.frames());
            Ok(())
        }
        SynthCommand::TwoD {
            k,
            grid,
            seed,
            out,
            stem,
        } => {
            let d = synth_2d(k, [grid; 2], &Synth2dOptions::default(), &mut SeededRng::new(seed))?;
            d.save(&out, &stem)?;
            println!("{} points, {} frames", d.trajectories.points(), d.trajectories.frames());
            Ok(())
        }
        SynthCommand::Phases {
            grid,
            frames,
            translate,
            rotate_x,
            wavelength,
            margin,
            out,
        } => {
            let c = (grid as f64 - 1.0) / 2.0;
            let motion = match (translate, rotate_x) {
                (Some(total), None) => Motion::Translation { total },
                (None, Some(angle)) => Motion::Rotation {
                    axis: Axis::X,
                    angle,
                    center: [c; 3],
                },
                _ => return Err(Error::InvalidArgument("give exactly one of --translate or --rotate-x".into())),
            };
            let seq = rigid_phase_sequence(&motion, [grid; 3], frames, tag_wavevectors(wavelength)?)?;
            save_phase_sequence(&out, &seq)?;
            let inside = |i: usize| i >= margin && i + margin < grid;
            let mask = Array3::from_shape_fn((grid, grid, grid), |(i, j, k)| inside(i) && inside(j) && inside(k));
            save_tensor(&mask_to_tensor(&mask), out.join("mask.mtf"))
        }
    }
}

fn frame_path(out: &Path, frame: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_t{frame:02}.{}", ext.to_string_lossy()),
        None => format!("{stem}_t{frame:02}"),
    };
    out.with_file_name(name)
}

fn track(a: TrackArgs) -> Result<()> {
    let frames = load_phase_sequence(&a.phases)?;
    let params = TrackingParams {
        iterations: a.iterations,
        ..Default::default()
    };
    let fields = register_sequence(&frames, a.spacing, &params, a.compose)?;
    if fields.len() == 1 {
        fields[0].save(&a.out)?;
    } else {
        for (t, f) in fields.iter().enumerate() {
            f.save(frame_path(&a.out, t + 2))?;
        }
    }
    if let Some(traj) = a.traj {
        let mask = match &a.mask {
            Some(m) => mask_from_tensor(&load_tensor(m)?)?,
            None => {
                let [x, y, z] = fields[0].dims();
                Array3::from_elem((x, y, z), true)
            }
        };
        save_tensor(&fields_to_trajectories(&fields, mask.view())?.to_tensor(), traj)?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let dataset: DatasetSpec = a.dataset.parse()?;
    let methods = Method::parse_list(&a.methods)?;
    let seeds = parse_seeds(&a.seeds)?;
    let mut cfg = dataset.default_method_config();
    if let Some(eta) = a.eta {
        cfg.factorize.eta = eta;
    }
    if let Some(lambda) = a.lambda {
        cfg.factorize.lambda = lambda;
    }
    if let Some(sigma) = a.sigma {
        cfg.sigma = sigma;
    }
    let graph = GraphConfig {
        neighbors: a.neighbors,
        ..Default::default()
    };
    let results = run_benchmark(&dataset, &methods, a.k, Some(&cfg), &graph, &seeds)?;
    save_results_csv(&results, &a.out)?;
    for m in &methods {
        if let Some(ac) = median_ac(&results, *m) {
            println!("{:<14} median AC {ac:6.2}%", m.id());
        }
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> ExitCode {
    let mut cfg = match PipelineConfig::load(&a.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: stage config: {e}");
            return ExitCode::from(if e.is_usage() { 2 } else { 1 });
        }
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(k) = a.k {
        cfg.cluster.k = Some(k);
    }
    match run_pipeline(&cfg, &a.out) {
        Ok(report) => {
            println!("k = {}", report.k);
            if let Some(ac) = report.accuracy {
                println!("accuracy {ac:.2}%");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    if let Command::Pipeline(a) = cli.command {
        return pipeline(a);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
