use ndarray::{Array1, Array2};
use proptest::prelude::*;

use motionunits::cluster::clustering_accuracy;
use motionunits::factorize::{update_v, update_w, DEFAULT_W_FLOOR};
use motionunits::graph::{knn_heat_graph, laplacian_quadratic, trace_wlw, Bandwidth};
use motionunits::labels::LabelVector;
use motionunits::rng::SeededRng;
use motionunits::select::{dispersion_of, ConsensusMatrix};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(lo, hi))
}

fn labels(n: usize, k: usize, seed: u64) -> LabelVector {
    let mut rng = SeededRng::new(seed);
    LabelVector::new((0..n).map(|_| rng.index(k)).collect())
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_invariants(m in 1usize..6, n in 4usize..40, kappa in 1usize..4, seed in any::<u64>()) {
        prop_assume!(n > kappa);
        let u = matrix(m, n, 0.0, 10.0, seed);
        let g = knn_heat_graph(&u, kappa, Bandwidth::Auto).unwrap();
        let q = g.dense_q();
        for i in 0..n {
            prop_assert_eq!(q[[i, i]], 0.0);
            for j in 0..n {
                prop_assert_eq!(q[[i, j]], q[[j, i]]);
                prop_assert!(q[[i, j]] >= 0.0 && q[[i, j]] <= 1.0);
            }
            prop_assert!((g.degrees()[i] - q.row(i).sum()).abs() <= 1e-12);
        }
        let l = g.dense_laplacian();
        for row in l.rows() {
            prop_assert!(row.sum().abs() <= 1e-12);
        }
        let mut rng = SeededRng::new(seed ^ 0x5a5a);
        let x = Array1::from_shape_simple_fn(n, || rng.uniform_range(-3.0, 3.0));
        prop_assert!(x.dot(&l.dot(&x)) >= -1e-9);
        prop_assert!((laplacian_quadratic(x.view(), &g).unwrap() - x.dot(&l.dot(&x))).abs() <= 1e-9);

        let w = matrix(3, n, 0.0, 2.0, seed.wrapping_add(1));
        let per_row: f64 = w.rows().into_iter().map(|r| laplacian_quadratic(r, &g).unwrap()).sum();
        prop_assert!((trace_wlw(w.view(), &g).unwrap() - per_row).abs() <= 1e-10 * per_row.abs().max(1.0));
    }

    #[test]
    fn updates_keep_factors_non_negative(
        m in 2usize..12,
        n in 4usize..24,
        k in 1usize..4,
        eta in 0.0f64..200.0,
        lambda in 0.0f64..200.0,
        seed in any::<u64>(),
    ) {
        let k = k.min(m).min(n);
        let u = matrix(m, n, 0.0, 10.0, seed);
        let mut v = matrix(m, k, 0.01, 1.0, seed.wrapping_add(1));
        let mut w = matrix(k, n, 0.01, 1.0, seed.wrapping_add(2));
        let g = knn_heat_graph(&u, 2, Bandwidth::Auto).unwrap();
        for _ in 0..20 {
            v = update_v(u.view(), v.view(), w.view()).unwrap();
            w = update_w(u.view(), v.view(), w.view(), &g, eta, lambda, DEFAULT_W_FLOOR).unwrap();
            prop_assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
            prop_assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn accuracy_is_symmetric_and_relabeling_invariant(n in 1usize..60, k in 1usize..6, seed in any::<u64>()) {
        let p = labels(n, k, seed);
        let t = labels(n, k, seed.wrapping_add(7));
        let ac = clustering_accuracy(&p, &t).unwrap();
        prop_assert!((0.0..=100.0).contains(&ac));
        prop_assert!((ac - clustering_accuracy(&t, &p).unwrap()).abs() <= 1e-12);
        let perm = &permutations(k)[(seed % 7) as usize % permutations(k).len()];
        let relabeled = LabelVector::new(p.labels().iter().map(|&l| perm[l]).collect());
        prop_assert!((ac - clustering_accuracy(&relabeled, &t).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn accuracy_matches_brute_force(n in 1usize..20, k in 1usize..6, seed in any::<u64>()) {
        let p = labels(n, k, seed);
        let t = labels(n, k, seed.wrapping_add(3));
        let best = permutations(k)
            .iter()
            .map(|perm| (0..n).filter(|&i| perm[p.labels()[i]] == t.labels()[i]).count())
            .max()
            .unwrap();
        let expected = 100.0 * best as f64 / n as f64;
        prop_assert!((clustering_accuracy(&p, &t).unwrap() - expected).abs() <= 1e-9);
    }

    #[test]
    fn dispersion_is_bounded_and_permutation_invariant(n in 2usize..25, runs in 1usize..6, seed in any::<u64>()) {
        let parts: Vec<LabelVector> = (0..runs).map(|r| labels(n, 3, seed.wrapping_add(r as u64))).collect();
        let c = ConsensusMatrix::from_partitions(&parts).unwrap();
        let rho = dispersion_of(c.matrix().view());
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rho));

        let mut order: Vec<usize> = (0..n).collect();
        order.rotate_left((seed % n as u64) as usize);
        order.swap(0, n - 1);
        let permuted = Array2::from_shape_fn((n, n), |(i, j)| c.matrix()[[order[i], order[j]]]);
        prop_assert!((rho - dispersion_of(permuted.view())).abs() <= 1e-12);
    }
}
