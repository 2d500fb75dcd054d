//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the PASS/FAIL table is
//! always printed. Exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use motionunits::bench::{median_ac, run_benchmark, DatasetSpec};
use motionunits::cluster::clustering_accuracy;
use motionunits::factorize::{factorize, frobenius_cost, update_v, update_w, FactorizeConfig, DEFAULT_W_FLOOR};
use motionunits::graph::{knn_heat_graph, trace_wlw, Bandwidth};
use motionunits::labels::LabelVector;
use motionunits::method::{GraphConfig, Method, MethodConfig};
use motionunits::rng::SeededRng;
use motionunits::select::{dispersion, dispersion_of, select_k, ConsensusMatrix};
use motionunits::synth::{rotate, Axis as RotAxis, Scenario};
use motionunits::tracking::{
    exp_field, register_pair, starred_gradient, synth_phases, tag_wavevectors, wrap_phase, TrackingParams,
    VelocityField,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn rand_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(lo, hi))
}

fn synthetic_3d_scenarios() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=5).collect();
    let mut medians = Vec::new();
    for scenario in Scenario::ALL {
        let ds = DatasetSpec::Synth3d { scenario, grid: 24 };
        let r = run_benchmark(&ds, &[Method::GsnmfNcut], None, None, &GraphConfig::default(), &seeds)
            .expect("benchmark runs");
        medians.push((scenario, median_ac(&r, Method::GsnmfNcut).unwrap()));
    }
    let elapsed = start.elapsed();
    let ok = medians
        .iter()
        .all(|&(s, ac)| ac >= 90.0 && (s != Scenario::C || ac >= 99.0));
    let table: Vec<String> = medians.iter().map(|(s, ac)| format!("{s} {ac:.2}%")).collect();
    outcome(
        ok && within(elapsed, 120),
        format!("median AC {} in {:.1}s", table.join(", "), elapsed.as_secs_f64()),
    )
}

fn synthetic_2d_regions() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=5).collect();
    let mut medians = Vec::new();
    for k in [7, 8] {
        let ds = DatasetSpec::Synth2d { k, grid: 64 };
        let cfg = ds.default_method_config();
        let r = run_benchmark(&ds, &[Method::GsnmfNcut], None, Some(&cfg), &GraphConfig::default(), &seeds)
            .expect("benchmark runs");
        medians.push((k, median_ac(&r, Method::GsnmfNcut).unwrap()));
    }
    let elapsed = start.elapsed();
    let ok = medians.iter().all(|&(_, ac)| ac >= 95.0);
    let table: Vec<String> = medians.iter().map(|(k, ac)| format!("k={k} {ac:.2}%")).collect();
    outcome(
        ok && within(elapsed, 30),
        format!("median AC {} in {:.1}s", table.join(", "), elapsed.as_secs_f64()),
    )
}

fn plain_nmf_descent() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(3);
    let mut worst = 0.0f64;
    let mut steps = 0;
    for _ in 0..50 {
        let m = 2 + rng.index(59);
        let n = 2 + rng.index(59);
        let k = 1 + rng.index(6.min(m).min(n));
        let u = rand_matrix(m, n, 0.0, 5.0, &mut rng);
        let scale = (u.mean().unwrap() / k as f64).sqrt();
        let mut v = rand_matrix(m, k, 0.01, 1.0, &mut rng) * scale;
        let mut w = rand_matrix(k, n, 0.01, 1.0, &mut rng) * scale;
        let g = knn_heat_graph(&u, 1, Bandwidth::Auto).unwrap();
        let mut prev = frobenius_cost(u.view(), v.view(), w.view()).unwrap();
        for _ in 0..100 {
            v = update_v(u.view(), v.view(), w.view()).unwrap();
            w = update_w(u.view(), v.view(), w.view(), &g, 0.0, 0.0, DEFAULT_W_FLOOR).unwrap();
            let c = frobenius_cost(u.view(), v.view(), w.view()).unwrap();
            worst = worst.max((c - prev) / prev.max(f64::MIN_POSITIVE));
            prev = c;
            steps += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && within(elapsed, 30),
        format!(
            "{steps} iterations, worst relative increase {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Direct element-wise evaluation of one alternating step, with the graph
/// matrices expanded densely from pairwise weights.
fn oracle_step(
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    q: &Array2<f64>,
    eta: f64,
    lambda: f64,
) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = u.dim();
    let k = v.ncols();
    let mut v1 = v.clone();
    for i in 0..m {
        for a in 0..k {
            let mut num = 0.0;
            for j in 0..n {
                num += u[[i, j]] * w[[a, j]];
            }
            let mut den = 0.0;
            for b in 0..k {
                let mut wwt = 0.0;
                for j in 0..n {
                    wwt += w[[b, j]] * w[[a, j]];
                }
                den += v[[i, b]] * wwt;
            }
            v1[[i, a]] = v[[i, a]] * num / den;
        }
    }
    let d: Vec<f64> = (0..n).map(|j| (0..n).map(|l| q[[j, l]]).sum()).collect();
    let mut w1 = w.clone();
    for a in 0..k {
        for j in 0..n {
            let mut num = 0.0;
            for i in 0..m {
                num += v1[[i, a]] * u[[i, j]];
            }
            for l in 0..n {
                num += lambda * w[[a, l]] * q[[l, j]];
            }
            let mut den = 0.0;
            for b in 0..k {
                let mut vtv = 0.0;
                for i in 0..m {
                    vtv += v1[[i, a]] * v1[[i, b]];
                }
                den += vtv * w[[b, j]];
            }
            den += lambda * w[[a, j]] * d[j];
            den += 0.5 * eta / w[[a, j]].sqrt();
            w1[[a, j]] = w[[a, j]] * num / den;
        }
    }
    (v1, w1)
}

fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn update_rule_oracle() -> Outcome {
    let mut rng = SeededRng::new(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = rand_matrix(6, 8, 0.0, 10.0, &mut rng);
        let v = rand_matrix(6, 3, 0.1, 2.0, &mut rng);
        let w = rand_matrix(3, 8, 0.1, 2.0, &mut rng);
        let g = knn_heat_graph(&u, 2, Bandwidth::Auto).unwrap();
        let q = Array2::from_shape_fn((8, 8), |(i, j)| if i == j { 0.0 } else { g.weight(i, j) });
        let (ev, ew) = oracle_step(&u, &v, &w, &q, 100.0, 1.0);
        let v1 = update_v(u.view(), v.view(), w.view()).unwrap();
        let w1 = update_w(u.view(), v1.view(), w.view(), &g, 100.0, 1.0, DEFAULT_W_FLOOR).unwrap();
        worst = worst.max(max_rel_diff(&v1, &ev)).max(max_rel_diff(&w1, &ew));
    }
    outcome(worst <= 1e-12, format!("20 instances, max relative difference {worst:.2e}"))
}

fn sparsity_monotonicity() -> Outcome {
    let mut rng = SeededRng::new(5);
    let (m, n, k) = (40, 200, 4);
    // dense uniform data; an exactly sparse planted W would already sit at
    // its zero pattern for every eta and leave nothing to compare
    let u = rand_matrix(m, n, 0.0, 10.0, &mut rng);
    let g = knn_heat_graph(&u, 5, Bandwidth::Auto).unwrap();
    let mut fractions = Vec::new();
    for eta in [0.0, 25.0, 50.0, 100.0] {
        let cfg = FactorizeConfig {
            eta,
            ..Default::default()
        };
        let f = factorize(u.view(), k, &g, &cfg, &mut SeededRng::new(11)).unwrap();
        let small = f.w.iter().filter(|&&x| x <= 10.0 * cfg.w_floor).count();
        fractions.push(small as f64 / f.w.len() as f64);
    }
    let ok = fractions.windows(2).all(|p| p[1] >= p[0]);
    let text: Vec<String> = fractions.iter().map(|f| format!("{f:.3}")).collect();
    outcome(ok, format!("near-zero fraction for eta 0/25/50/100: {}", text.join(" / ")))
}

fn planted_clusters(per: usize, noise: f64, seed: u64) -> Array2<f64> {
    let centers = [
        [8.0, 1.0, 1.0, 8.0, 1.0, 1.0],
        [1.0, 8.0, 1.0, 1.0, 8.0, 1.0],
        [1.0, 1.0, 8.0, 1.0, 1.0, 8.0],
    ];
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_fn((6, 3 * per), |(i, j)| (centers[j / per][i] + noise * rng.normal()).max(0.0))
}

fn model_selection() -> Outcome {
    let start = Instant::now();
    let u = planted_clusters(30, 0.5, 101);
    let g = GraphConfig::default().build(&u).unwrap();
    let cfg = MethodConfig {
        factorize: FactorizeConfig {
            eta: 1.0,
            lambda: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for master in [1u64, 2, 3] {
        let s = select_k(&u, &g, (2, 5), 30, &cfg, master).unwrap();
        let rho3 = s.report.rho.iter().find(|e| e.k == 3).unwrap().rho;
        let next = s
            .report
            .rho
            .iter()
            .filter(|e| e.k != 3)
            .map(|e| e.rho)
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= s.report.best_k == 3 && rho3 > next;
        notes.push(format!("seed {master}: k*={} rho3={rho3:.3} next={next:.3}", s.report.best_k));
    }
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, 120),
        format!("{}; {:.1}s", notes.join(", "), elapsed.as_secs_f64()),
    )
}

fn dispersion_exactness() -> Outcome {
    let binary = ConsensusMatrix::from_partitions(&[LabelVector::new(vec![0, 0, 1, 2, 1])]).unwrap();
    let a = dispersion(&binary);
    let b = dispersion_of(Array2::from_elem((5, 5), 0.5).view());
    let c = dispersion(&ConsensusMatrix::new(ndarray::array![[1.0, 0.75], [0.75, 1.0]], 4).unwrap());
    let ok = a == 1.0 && b == 0.0 && (c - 0.625).abs() <= 1e-15;
    outcome(ok, format!("binary {a}, all-0.5 {b}, 2x2 case {c}"))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn accuracy_oracle() -> Outcome {
    let mut rng = SeededRng::new(8);
    let mut mismatches = 0;
    for _ in 0..200 {
        let k = 1 + rng.index(5);
        let n = 1 + rng.index(20);
        let pred: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let best = permutations(k)
            .iter()
            .map(|perm| (0..n).filter(|&i| perm[pred[i]] == truth[i]).count())
            .max()
            .unwrap();
        let brute = 100.0 * best as f64 / n as f64;
        let got = clustering_accuracy(&LabelVector::new(pred), &LabelVector::new(truth)).unwrap();
        if (got - brute).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("200 pairs, {mismatches} mismatches"))
}

fn rms_interior(d: &Array4<f64>, truth: impl Fn([f64; 3]) -> [f64; 3], margin: usize) -> f64 {
    let (_, nx, ny, nz) = d.dim();
    let (mut sum, mut count) = (0.0, 0usize);
    for i in margin..nx - margin {
        for j in margin..ny - margin {
            for k in margin..nz - margin {
                let t = truth([i as f64, j as f64, k as f64]);
                sum += (0..3).map(|a| (d[[a, i, j, k]] - t[a]).powi(2)).sum::<f64>();
                count += 1;
            }
        }
    }
    (sum / count as f64).sqrt()
}

fn smooth_velocity(n: usize, seed: u64) -> Array4<f64> {
    let mut rng = SeededRng::new(seed);
    let a: Vec<f64> = (0..12).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let phase: Vec<f64> = (0..3).map(|_| rng.uniform_range(0.0, 2.0 * PI)).collect();
    let nf = n as f64;
    let mut v = Array4::from_shape_fn((3, n, n, n), |(c, i, j, k)| {
        let x = [i as f64 / nf - 0.5, j as f64 / nf - 0.5, k as f64 / nf - 0.5];
        a[4 * c] + a[4 * c + 1] * x[0] + a[4 * c + 2] * x[1] + a[4 * c + 3] * x[2]
            + 0.1 * (2.0 * PI * x[(c + 1) % 3] + phase[c]).sin()
    });
    let peak = v
        .lanes(Axis(0))
        .into_iter()
        .map(|l| l.dot(&l).sqrt())
        .fold(0.0, f64::max);
    v *= 2.0 / peak;
    v
}

fn tracking_recovery() -> Outcome {
    let start = Instant::now();
    let dims = [32, 32, 32];
    let params = TrackingParams::default();
    let waves = tag_wavevectors(8.0).unwrap();
    let margin = 4;

    let t = [0.5, 0.0, 0.0];
    let set = synth_phases(move |x| [x[0] - t[0], x[1] - t[1], x[2] - t[2]], waves, dims).unwrap();
    let translation = rms_interior(&register_pair(&set, &params).unwrap().displacement, |_| t, margin);

    let center = [15.5; 3];
    let angle = -0.1;
    let set = synth_phases(|x| rotate(x, RotAxis::X, -angle, center), waves, dims).unwrap();
    let truth = |x: [f64; 3]| {
        let y = rotate(x, RotAxis::X, angle, center);
        [y[0] - x[0], y[1] - x[1], y[2] - x[2]]
    };
    let rotation = rms_interior(&register_pair(&set, &params).unwrap().displacement, truth, margin);

    let round_trip = (0..3)
        .map(|s| exp_field(&VelocityField::new(smooth_velocity(32, s)).unwrap()).composition_error(6))
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        translation < 0.1 && rotation < 0.3 && round_trip < 1e-3 && within(elapsed, 180),
        format!(
            "translation RMS {translation:.4}, rotation RMS {rotation:.4}, forward-inverse {round_trip:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn wrap_and_gradient() -> Outcome {
    let w = [wrap_phase(0.0), wrap_phase(1.5 * PI), wrap_phase(-1.5 * PI)];
    let wrap_ok = w[0] == 0.0 && (w[1] + PI / 2.0).abs() <= 1e-15 && (w[2] - PI / 2.0).abs() <= 1e-15;
    let phase = Array3::from_shape_fn((200, 5, 5), |(i, _, _)| wrap_phase(0.1 * i as f64));
    let g = starred_gradient(phase.view(), [1.0; 3]).unwrap();
    let (mut good, mut total) = (0, 0);
    for i in 1..199 {
        for j in 1..4 {
            for k in 1..4 {
                total += 1;
                if (g[[0, i, j, k]] - 0.1).abs() <= 1e-6 {
                    good += 1;
                }
            }
        }
    }
    let frac = good as f64 / total as f64;
    outcome(
        wrap_ok && frac >= 0.95,
        format!("wrap values {w:?}, gradient correct at {:.1}% of interior", 100.0 * frac),
    )
}

fn laplacian_properties() -> Outcome {
    let mut rng = SeededRng::new(11);
    let (mut row_err, mut min_quad, mut trace_err) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let m = 1 + rng.index(8);
        let n = 3 + rng.index(58);
        let kappa = 1 + rng.index(8.min(n - 1));
        let u = rand_matrix(m, n, 0.0, 10.0, &mut rng);
        let g = knn_heat_graph(&u, kappa, Bandwidth::Auto).unwrap();
        let l = g.dense_laplacian();
        row_err = l.sum_axis(Axis(1)).iter().fold(row_err, |e, r| e.max(r.abs()));
        let x = Array1::from_shape_simple_fn(n, || rng.uniform_range(-5.0, 5.0));
        min_quad = min_quad.min(x.dot(&l.dot(&x)));
        let w = rand_matrix(1 + rng.index(5), n, 0.0, 3.0, &mut rng);
        let dense = w.dot(&l).dot(&w.t()).diag().sum();
        let q = g.dense_q();
        let mut pairwise = 0.0;
        for row in w.rows() {
            for i in 0..n {
                for j in 0..n {
                    pairwise += 0.5 * q[[i, j]] * (row[i] - row[j]).powi(2);
                }
            }
        }
        let lib = trace_wlw(w.view(), &g).unwrap();
        let scale = pairwise.abs().max(1.0);
        trace_err = trace_err.max((dense - pairwise).abs() / scale).max((lib - pairwise).abs() / scale);
    }
    outcome(
        row_err <= 1e-12 && min_quad >= -1e-9 && trace_err <= 1e-10,
        format!("max |row sum| {row_err:.1e}, min x'Lx {min_quad:.3e}, trace mismatch {trace_err:.1e}"),
    )
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 42,
  "synth": {"kind": "synth3d", "scenario": "A"},
  "select": {"k_min": 2, "k_max": 4, "runs": 5}
}"#,
    )
    .unwrap();
    let run = |out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_motionunits"))
            .arg("pipeline")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ra, rb) = (run(&a), run(&b));
    if !ra.status.success() || !rb.status.success() {
        return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&ra.stderr)));
    }
    let same = |name: &str| std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap();
    let ok = same("labels.csv") && same("report.json");
    outcome(ok, format!("labels.csv identical: {}, report.json identical: {}", same("labels.csv"), same("report.json")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("synthetic 3D scenarios", synthetic_3d_scenarios),
        ("synthetic 2D regions", synthetic_2d_regions),
        ("plain NMF descent", plain_nmf_descent),
        ("update-rule oracle", update_rule_oracle),
        ("sparsity monotonicity", sparsity_monotonicity),
        ("model selection", model_selection),
        ("dispersion exactness", dispersion_exactness),
        ("accuracy oracle", accuracy_oracle),
        ("tracking recovery", tracking_recovery),
        ("wrap and gradient identities", wrap_and_gradient),
        ("Laplacian properties", laplacian_properties),
        ("pipeline determinism", pipeline_determinism),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed, {:.1}s total",
        criteria.len() - failed,
        suite.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
