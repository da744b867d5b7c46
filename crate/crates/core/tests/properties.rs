mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use consensus_core::baselines::{best_constant_weight, finite_time_plan, static_optimal_weights, FiniteTimeVariant, STATIC_TOL};
use consensus_core::dynamics::{
    estimate_epsilon, sample_initial, simulate, step, InitialDistribution, WeightSchedule,
};
use consensus_core::graph::DISTINCT_EIG_TOL;
use consensus_core::linalg::{eigen_residual, spectral_radius_complement, sym_eig, DenseMatrix};
use consensus_core::named::{load_named, NAMED_GRAPHS};
use consensus_core::schedule_io::{parse_schedule, serialize_schedule};
use consensus_core::harness::RandomModel;
use consensus_core::train::{train_incremental, train_incremental_with, TrainConfig};
use consensus_core::unfold::{backward_gradients, forward_unfolded};
use consensus_core::{EdgeWeights, Graph};

use common::central_difference;

/// Connected graph on `n` nodes: a random spanning tree plus extra edges.
fn graph_from_seed(n: usize, extra: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < extra {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edge_list(n, &edges).unwrap()
}

fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n, 0.0..0.6f64, any::<u64>()).prop_map(|(n, p, s)| graph_from_seed(n, p, s))
}

fn arb_graph_and_weights(max_n: usize, max_w: f64) -> impl Strategy<Value = (Graph, Vec<f64>)> {
    arb_graph(max_n).prop_flat_map(move |g| {
        let m = g.edge_count();
        (Just(g), prop::collection::vec(0.0..max_w, m))
    })
}

fn arb_state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn laplacian_rows_sum_to_zero_and_are_symmetric((g, w) in arb_graph_and_weights(15, 2.0)) {
        let l = g.laplacian(&EdgeWeights::new(w)).unwrap();
        prop_assert_eq!(l.asymmetry(), 0.0);
        for i in 0..g.n() {
            let sum: f64 = l.row(i).iter().sum();
            prop_assert!(sum.abs() < 1e-12, "row {} sums to {}", i, sum);
        }
    }

    #[test]
    fn step_conserves_sum((g, w, x) in arb_graph_and_weights(15, 1.0).prop_flat_map(|(g, w)| {
        let n = g.n();
        (Just(g), Just(w), arb_state(n))
    })) {
        let y = step(&g, &w, &x).unwrap();
        let before: f64 = x.iter().sum();
        let after: f64 = y.iter().sum();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((before - after).abs() <= 1e-12 * g.n() as f64 * scale.max(1.0));
    }

    #[test]
    fn error_follows_same_recursion((g, w, x) in arb_graph_and_weights(12, 1.0).prop_flat_map(|(g, w)| {
        let n = g.n();
        (Just(g), Just(w), arb_state(n))
    })) {
        let c = x.iter().sum::<f64>() / x.len() as f64;
        let e: Vec<f64> = x.iter().map(|v| v - c).collect();
        let next_x = step(&g, &w, &x).unwrap();
        let next_e = step(&g, &w, &e).unwrap();
        for (a, b) in next_x.iter().zip(&next_e) {
            prop_assert!((a - c - b).abs() < 1e-11, "{} vs {}", a - c, b);
        }
    }

    #[test]
    fn gradient_matches_central_differences(
        (g, rows, x0) in arb_graph(12).prop_flat_map(|g| {
            let m = g.edge_count();
            let n = g.n();
            (Just(g), prop::collection::vec(prop::collection::vec(0.0..0.6f64, m), 1..=6), prop::collection::vec(-1.0..1.0f64, n))
        })
    ) {
        let states = forward_unfolded(&g, &rows, &x0).unwrap();
        let grads = backward_gradients(&g, &rows, &states).unwrap();
        for (k, row) in grads.iter().enumerate() {
            for (e, &analytic) in row.iter().enumerate() {
                let fd = central_difference(&g, &rows, &x0, k, e, 1e-6);
                let allowed = (1e-6 * analytic.abs()).max(1e-9);
                prop_assert!((analytic - fd).abs() <= allowed, "layer {} edge {}: {} vs {}", k, e, analytic, fd);
            }
        }
    }

    #[test]
    fn forward_pass_equals_simulation((g, rows, x0) in arb_graph(10).prop_flat_map(|g| {
        let m = g.edge_count();
        let n = g.n();
        (Just(g), prop::collection::vec(prop::collection::vec(0.0..0.6f64, m), 1..=5), arb_state(n))
    })) {
        let schedule = WeightSchedule::new(rows.clone()).unwrap();
        let t = simulate(&g, &schedule, &x0, rows.len(), false).unwrap();
        let s = forward_unfolded(&g, &rows, &x0).unwrap();
        prop_assert_eq!(t.states.as_slice(), s.layers());
    }

    #[test]
    fn schedule_file_round_trip((g, rows) in arb_graph(12).prop_flat_map(|g| {
        let m = g.edge_count();
        (Just(g), prop::collection::vec(prop::collection::vec(0.0..1e3f64, m), 1..=4))
    })) {
        let s = WeightSchedule::new(rows).unwrap();
        let (g2, s2) = parse_schedule(&serialize_schedule(&g, &s).unwrap()).unwrap();
        prop_assert_eq!(g2, g);
        let bits = |s: &WeightSchedule| s.rows().iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&s2), bits(&s));
    }

    #[test]
    fn symmetric_radius_agrees_with_eigen_oracle((g, w) in arb_graph_and_weights(14, 0.6)) {
        let m = g.transition_matrix(&EdgeWeights::new(w)).unwrap();
        let rho = spectral_radius_complement(&m, 1e-12).unwrap();
        let eig = sym_eig(&m).unwrap();
        // drop the eigenvalue of the all-ones eigenvector, wherever it sits
        let ones_idx = (0..g.n())
            .max_by(|&a, &b| {
                let s = |k| eig.vector(k).iter().sum::<f64>().abs();
                s(a).total_cmp(&s(b))
            })
            .unwrap();
        let oracle = eig.values.iter().enumerate().filter(|&(k, _)| k != ones_idx).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        prop_assert!((rho - oracle).abs() < 1e-6 * oracle.max(1e-3), "{} vs {}", rho, oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobi_matches_nalgebra(n in 1usize..=60, seed in any::<u64>()) {
        check_against_nalgebra(n, seed);
    }

    #[test]
    fn static_never_worse_than_best_constant(g in arb_graph(12)) {
        let s = static_optimal_weights(&g, STATIC_TOL).unwrap();
        let b = best_constant_weight(&g).unwrap();
        prop_assert!(s.achieved_factor <= b.factor + 1e-6);
        let rho = spectral_radius_complement(&g.transition_matrix(&s.weights).unwrap(), 1e-12).unwrap();
        prop_assert!((rho - s.achieved_factor).abs() < 1e-6, "{} vs {}", rho, s.achieved_factor);
    }
}

fn check_against_nalgebra(n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let ours = sym_eig(&a).unwrap();
    let oracle = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(oracle).eigenvalues.iter().copied().collect();
    theirs.sort_by(f64::total_cmp);
    let scale = a.frobenius_norm().max(1.0);
    for (x, y) in ours.values.iter().zip(&theirs) {
        assert!((x - y).abs() < 1e-10 * scale, "n={n}: {x} vs {y}");
    }
    assert!(eigen_residual(&a, &ours) < 1e-9 * scale);
    let vtv = ours.vectors.transpose().matmul(&ours.vectors).unwrap();
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((vtv[(i, j)] - want).abs() < 1e-10, "n={n}: V^T V off at ({i},{j})");
        }
    }
}

#[test]
fn jacobi_matches_nalgebra_at_large_sizes() {
    for (n, seed) in [(120, 1), (250, 2)] {
        check_against_nalgebra(n, seed);
    }
}

#[test]
fn laplacian_spectrum_matches_nalgebra_on_named_graphs() {
    for name in NAMED_GRAPHS {
        let g = load_named(name).unwrap();
        let l = g.unit_laplacian();
        let ours = g.laplacian_spectrum().unwrap();
        let mut theirs: Vec<f64> =
            nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_row_slice(g.n(), g.n(), l.as_slice())).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn nulling_composite_averages_whenever_k_is_small() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let g = graph_from_seed(3 + (seed as usize % 8), 0.5, seed);
        if g.distinct_eigenvalue_count(DISTINCT_EIG_TOL).unwrap() > 8 {
            continue;
        }
        let plan = finite_time_plan(&g, FiniteTimeVariant::Nulling).unwrap();
        let c = plan.composite(&g);
        let n = g.n() as f64;
        let dev = c.as_slice().iter().map(|v| (v - 1.0 / n).powi(2)).sum::<f64>().sqrt();
        assert!(dev < 1e-8, "seed {seed}: {dev}");
        checked += 1;
    }
    assert!(checked > 50, "only {checked} graphs with K <= 8");
}

#[test]
fn zero_weight_schedule_is_rejected_by_rate_certificate() {
    let g = load_named("krackhardt_kite").unwrap();
    let s = WeightSchedule::new(vec![vec![0.0; g.edge_count()]; 2]).unwrap();
    assert_eq!(
        consensus_core::asymptotic_convergence_factor(&g, &s),
        Err(consensus_core::ConsensusError::EigenvalueOneNotSimple)
    );
}

#[test]
fn finite_time_scaling_grows_with_ba_size() {
    let medians: Vec<f64> = [10usize, 15, 20, 25, 30]
        .iter()
        .map(|&n| {
            let mut v: Vec<f64> = (0..10u64)
                .map(|seed| {
                    let g = RandomModel::Ba { m: 3 }.generate(n, seed).unwrap();
                    finite_time_plan(&g, FiniteTimeVariant::Nulling).unwrap().final_scale.abs().log10().abs()
                })
                .collect();
            v.sort_by(f64::total_cmp);
            0.5 * (v[4] + v[5])
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

#[test]
fn evaluation_is_independent_of_thread_count() {
    let g = load_named("karate").unwrap();
    let s = WeightSchedule::constant(EdgeWeights::constant(g.edge_count(), 0.05), 1).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_epsilon(&g, &s, &InitialDistribution::LOGNORMAL, 7, 3000, true, 11).unwrap())
    };
    let one = run(1);
    let many = run(8);
    assert_eq!(one.mean.to_bits(), many.mean.to_bits());
    assert_eq!(one.stderr.to_bits(), many.stderr.to_bits());
}

#[test]
fn training_is_deterministic_and_stays_nonnegative() {
    let g = load_named("chvatal").unwrap();
    let cfg = TrainConfig { horizon: 4, samples_per_generation: 300, seed: 9, ..TrainConfig::default() };
    let mut min_seen = f64::INFINITY;
    let a = train_incremental_with(&g, &cfg, |_, w| {
        min_seen = w.iter().flatten().fold(min_seen, |m, &v| m.min(v));
    })
    .unwrap();
    let b = train_incremental(&g, &cfg).unwrap();
    assert!(min_seen >= 0.0);
    assert_eq!(a, b);
}

#[test]
fn incremental_generations_do_not_regress() {
    for name in NAMED_GRAPHS {
        let g = load_named(name).unwrap();
        let cfg = TrainConfig { seed: 42, ..TrainConfig::default() };
        let mut per_gen = Vec::new();
        train_incremental_with(&g, &cfg, |gen, w| {
            let s = WeightSchedule::new(w.to_vec()).unwrap();
            per_gen.push(estimate_epsilon(&g, &s, &InitialDistribution::UNIFORM, gen, 10_000, false, 5).unwrap());
        })
        .unwrap();
        let curve: Vec<String> = per_gen.iter().map(|e| format!("{:.2e}", e.mean)).collect();
        for (gen, pair) in per_gen.windows(2).enumerate() {
            let slack = 3.0 * pair[0].stderr.hypot(pair[1].stderr);
            assert!(
                pair[1].mean <= pair[0].mean + slack,
                "{name}: generation {} eps {} after generation {} eps {}; per-generation eps {curve:?}",
                gen + 2,
                pair[1].mean,
                gen + 1,
                pair[0].mean
            );
        }
    }
}

#[test]
fn sample_initial_is_reproducible() {
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    for dist in InitialDistribution::ALL {
        assert_eq!(sample_initial(&dist, 20, &mut a), sample_initial(&dist, 20, &mut b));
    }
}
