use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsrl::drift::make_abrupt;
use nsrl::eluder::{
    be_dimension, dbe_dimension, de_dimension_exact_table, de_dimension_greedy_table, dirac_family,
    is_eps_independent, linear_class_generator, residual_class, residual_class_episode, universal_gap_table,
    ExpectationTable, Method, SearchLimits, DEFAULT_CAP,
};
use nsrl::func_class::build_realizable_class;
use nsrl::instances::{chain2, random_snapshot};
use nsrl::NonstationaryMdp;

/// Plain depth-first search over point sequences; `nu` extends a prefix when
/// some row exceeds both `eps` and the root energy of that row on the prefix.
fn brute_force(rows: &[Vec<f64>], eps: f64) -> usize {
    fn go(rows: &[Vec<f64>], eps: f64, prefix: &mut Vec<usize>) -> usize {
        let n_points = rows[0].len();
        let mut best = prefix.len();
        for p in 0..n_points {
            let ok = rows.iter().any(|g| {
                let energy: f64 = prefix.iter().map(|&q| g[q] * g[q]).sum();
                g[p].abs() > eps.max(energy.sqrt())
            });
            if ok {
                prefix.push(p);
                best = best.max(go(rows, eps, prefix));
                prefix.pop();
            }
        }
        best
    }
    go(rows, eps, &mut Vec::new())
}

fn tiny_mdp_and_class(seed: u64) -> (NonstationaryMdp, nsrl::func_class::FunctionClass) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_snapshot(2, 2, 2, &mut rng);
    let b = random_snapshot(2, 2, 2, &mut rng);
    let mdp = make_abrupt(&a, &b, 1, 2).unwrap();
    let class = build_realizable_class(&mdp, 1, 0.4, false, &mut rng).unwrap();
    (mdp, class)
}

#[test]
fn exact_search_matches_brute_force_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let nf = rng.gen_range(1..=2);
        let np = rng.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..nf).map(|_| (0..np).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let eps = rng.gen_range(0.05..0.6);
        let table = ExpectationTable::from_rows(rows.clone());
        let exact = de_dimension_exact_table(&table, eps, SearchLimits::with_cap(nf * np + 1)).unwrap();
        assert!(!exact.truncated);
        assert_eq!(exact.value, brute_force(&rows, eps), "{rows:?} eps {eps}");
        assert!(exact.replay(&table, eps));
        let greedy = de_dimension_greedy_table(&table, eps, 0).unwrap();
        assert!(greedy.value <= exact.value);
        assert!(greedy.replay(&table, eps));
    }
}

#[test]
fn exact_dimension_does_not_grow_with_eps() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..30 {
        let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let table = ExpectationTable::from_rows(rows);
        let dims: Vec<usize> = [0.05, 0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|&eps| de_dimension_exact_table(&table, eps, SearchLimits::with_cap(7)).unwrap().value)
            .collect();
        assert!(dims.windows(2).all(|w| w[0] >= w[1]), "{dims:?}");
    }
}

#[test]
fn independence_test_on_points() {
    let (mdp, class) = tiny_mdp_and_class(1);
    let g = residual_class(&class, &mdp, 0).unwrap();
    let pi = dirac_family(2, 2);
    // with an empty prefix a point is independent iff some residual exceeds eps there
    for &p in &pi {
        let hit = is_eps_independent(p, &[], &g, 0.1).unwrap().is_some();
        let direct = g.iter().any(|r| r.values.get(p.state, p.action).abs() > 0.1);
        assert_eq!(hit, direct);
    }
    assert!(is_eps_independent(pi[0], &[], &g, 0.0).is_err());
    assert!(is_eps_independent(pi[0], &[], &[], 0.1).is_err());
}

#[test]
fn stationary_dynamic_dimension_equals_single_episode_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let mdp = NonstationaryMdp::stationary(random_snapshot(2, 2, 2, &mut rng), 4).unwrap();
        let class = build_realizable_class(&mdp, 2, 0.4, false, &mut rng).unwrap();
        for h in 0..2 {
            let all = residual_class(&class, &mdp, h).unwrap();
            let one = residual_class_episode(&class, &mdp, 0, h).unwrap();
            assert_eq!(all.len(), one.len());
        }
        for method in [Method::Exact, Method::Greedy] {
            let dbe = dbe_dimension(&class, &mdp, 0.2, method, DEFAULT_CAP).unwrap();
            let be = be_dimension(&class, &mdp, 0, 0.2, method, DEFAULT_CAP).unwrap();
            assert_eq!(dbe.max, be.max);
        }
    }
}

#[test]
fn single_episode_dimension_never_exceeds_dynamic() {
    for seed in 0..8 {
        let (mdp, class) = tiny_mdp_and_class(seed);
        let dbe = dbe_dimension(&class, &mdp, 0.2, Method::Exact, 9).unwrap();
        assert!(!dbe.truncated);
        for k in 0..mdp.n_episodes() {
            assert!(be_dimension(&class, &mdp, k, 0.2, Method::Exact, 9).unwrap().max <= dbe.max);
        }
    }
}

#[test]
fn dirac_dimension_matches_brute_force_on_tiny_mdps() {
    for seed in 0..6 {
        let (mdp, class) = tiny_mdp_and_class(100 + seed);
        let dbe = dbe_dimension(&class, &mdp, 0.3, Method::Exact, 13).unwrap();
        for h in 0..2 {
            let rows: Vec<Vec<f64>> = residual_class(&class, &mdp, h)
                .unwrap()
                .iter()
                .map(|r| r.values.as_slice().to_vec())
                .collect();
            if rows.iter().all(|r| r.iter().all(|&v| v == 0.0)) {
                assert_eq!(dbe.per_step[h].value, 0);
            } else {
                assert_eq!(dbe.per_step[h].value, brute_force(&rows, 0.3));
            }
        }
    }
}

#[test]
fn optimal_only_class_on_chain_has_zero_residuals() {
    let mdp = NonstationaryMdp::stationary(chain2(3), 2).unwrap();
    let class = build_realizable_class(&mdp, 0, 0.0, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let dbe = dbe_dimension(&class, &mdp, 0.1, Method::Exact, DEFAULT_CAP).unwrap();
    assert_eq!(dbe.max, 0);
}

#[test]
fn linear_bench_without_drift_collapses_to_one_episode() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for d in 1..=3 {
        let bench = linear_class_generator(d, 2, 5, 3, 0.0, &mut rng).unwrap();
        let bound = 4.0 * 2.0 * (d as f64).sqrt();
        for h in 0..2 {
            let res = bench.residuals(h);
            assert!(res.len() <= 3);
            assert!(res.iter().all(|r| r.provenance.episode == 0));
            assert!(res.iter().all(|r| r.values.as_slice().iter().all(|v| v.abs() <= bound + 1e-9)));
        }
    }
    let drifting = linear_class_generator(2, 2, 5, 3, 0.5, &mut rng).unwrap();
    assert!(drifting.residuals(0).len() > 3);
    assert!(linear_class_generator(0, 2, 5, 3, 0.0, &mut rng).is_err());
}

#[test]
fn universal_gap_of_one_function_one_point() {
    // a single length-one sequence; the gap is the excess of 1 over eps
    let table = ExpectationTable::from_rows(vec![vec![1.0]]);
    let at = |eps: f64| universal_gap_table(&table, eps, SearchLimits::with_cap(4)).unwrap().value;
    assert!((at(0.5) - 0.5).abs() < 1e-12);
    assert!((at(0.1) - 0.9).abs() < 1e-12);
    assert_eq!(at(1.0), f64::INFINITY);
}
