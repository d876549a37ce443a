use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsrl::drift::make_abrupt;
use nsrl::instances::{chain2, random_snapshot};
use nsrl::{MdpSnapshot, NonstationaryMdp, Policy, QTable, TransitionKernel};

fn chain_with_row(row: [f64; 2]) -> MdpSnapshot {
    let mut snap = chain2(2);
    snap.transitions[0].row_mut(0, 0).copy_from_slice(&row);
    snap
}

/// Every deterministic Markov policy of a small snapshot.
fn all_policies(n_states: usize, n_actions: usize, horizon: usize) -> Vec<Policy> {
    let slots = n_states * horizon;
    let total = n_actions.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let mut actions = vec![vec![0; n_states]; horizon];
            for row in actions.iter_mut() {
                for a in row.iter_mut() {
                    *a = code % n_actions;
                    code /= n_actions;
                }
            }
            Policy { actions }
        })
        .collect()
}

#[test]
fn chain_regret_of_staying_is_one() {
    let mdp = NonstationaryMdp::stationary(chain2(2), 1).unwrap();
    let stay = Policy::constant(2, 2, 0);
    let report = mdp.dynamic_regret(&[stay]).unwrap();
    assert!((report.total - 1.0).abs() < 1e-12);
    assert_eq!(report.increments.len(), 1);
}

#[test]
fn optimal_policies_have_zero_regret_and_enumeration_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let snap = random_snapshot(2, 2, 2, &mut rng);
        let mdp = NonstationaryMdp::stationary(snap.clone(), 3).unwrap();
        let best = all_policies(2, 2, 2)
            .iter()
            .map(|p| mdp.evaluate_policy(0, p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let values = mdp.optimal_values(0).unwrap();
        assert!((values.initial_value(snap.initial_state) - best).abs() < 1e-12);
        let pis = vec![values.greedy_policy(); 3];
        assert!(mdp.dynamic_regret(&pis).unwrap().total.abs() < 1e-10);
    }
}

#[test]
fn regret_increments_are_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (s, a, h) = (rng.gen_range(2..=4), rng.gen_range(1..=3), rng.gen_range(1..=4));
        let episodes: Vec<MdpSnapshot> = (0..3).map(|_| random_snapshot(s, a, h, &mut rng)).collect();
        let mdp = NonstationaryMdp::from_episodes(episodes).unwrap();
        let policies: Vec<Policy> = (0..3)
            .map(|_| Policy {
                actions: (0..h).map(|_| (0..s).map(|_| rng.gen_range(0..a)).collect()).collect(),
            })
            .collect();
        let report = mdp.dynamic_regret(&policies).unwrap();
        assert!(report.increments.iter().all(|&x| x >= -1e-12));
    }
}

#[test]
fn regret_needs_one_policy_per_episode() {
    let mdp = NonstationaryMdp::stationary(chain2(2), 2).unwrap();
    assert!(mdp.dynamic_regret(&[Policy::constant(2, 2, 0)]).is_err());
}

#[test]
fn local_variation_examples() {
    let mdp = NonstationaryMdp::from_episodes(vec![chain_with_row([1.0, 0.0]), chain_with_row([0.5, 0.5])]).unwrap();
    for k in 0..2 {
        for h in 0..2 {
            let lv = mdp.local_variation(k, h, 0).unwrap();
            assert_eq!((lv.delta_p, lv.delta_r), (0.0, 0.0));
        }
    }
    assert!((mdp.local_variation(1, 0, 1).unwrap().delta_p - 1.0).abs() < 1e-12);
    assert_eq!(mdp.local_variation(1, 1, 1).unwrap().delta_p, 0.0);
    assert!(mdp.local_variation(2, 0, 1).is_err());
    assert!(mdp.local_variation(0, 2, 1).is_err());
}

#[test]
fn single_switch_sets_average_variation() {
    let mdp = make_abrupt(&chain_with_row([1.0, 0.0]), &chain_with_row([0.5, 0.5]), 7, 20).unwrap();
    let avg = mdp.average_variation();
    assert!((avg.l - 1.0).abs() < 1e-12);
    assert_eq!(avg.l_theta, 0.0);
    let budgets = mdp.variation_budgets();
    assert!((budgets.delta_p - 1.0).abs() < 1e-12);
}

#[test]
fn json_round_trip_and_validation_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mdp = NonstationaryMdp::from_episodes((0..3).map(|_| random_snapshot(3, 2, 2, &mut rng)).collect()).unwrap();
    let path = dir.path().join("mdp.json");
    mdp.save(&path).unwrap();
    assert_eq!(NonstationaryMdp::load(&path).unwrap(), mdp);

    // a row summing to 1.1 is rejected when loading
    let mut bad = chain2(1);
    bad.transitions[0] = TransitionKernel::from_flat(2, 2, vec![0.6, 0.5, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    bad.rewards[0] = QTable::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
    let text = serde_json::to_string(&NonstationaryMdp::from_episodes(vec![bad]).unwrap()).unwrap();
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, text).unwrap();
    let err = NonstationaryMdp::load(&bad_path).unwrap_err().to_string();
    assert!(err.contains("row"), "{err}");
}
