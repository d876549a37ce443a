//! Small built-in environments used by tests, examples and experiment configs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::MdpSnapshot;
use crate::table::{QTable, TransitionKernel};

/// Two states, actions `{stay, flip}`, reward `1{s = 1}` for either action,
/// deterministic transitions, start in state 0.
pub fn chain2(horizon: usize) -> MdpSnapshot {
    let kernel = TransitionKernel::deterministic(2, 2, |s, a| if a == 1 { 1 - s } else { s });
    let reward = QTable::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
    MdpSnapshot::new(0, vec![kernel; horizon], vec![reward; horizon]).expect("valid chain")
}

/// Random rows drawn uniformly on the simplex and rewards uniform on `[0, 1]`.
pub fn random_snapshot<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> MdpSnapshot {
    let transitions = (0..horizon)
        .map(|_| random_kernel(n_states, n_actions, rng))
        .collect();
    let rewards = (0..horizon)
        .map(|_| {
            QTable::from_flat(
                n_states,
                n_actions,
                (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect(),
            )
        })
        .collect();
    MdpSnapshot::new(0, transitions, rewards).expect("valid random snapshot")
}

pub fn random_kernel<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> TransitionKernel {
    let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        probs.extend(random_simplex_point(n_states, rng));
    }
    TransitionKernel::from_flat(n_states, n_actions, probs)
}

/// Uniform draw from the probability simplex (normalized exponentials).
pub fn random_simplex_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // push the rounding residue into the largest entry so the row sums to 1
    let residue = 1.0 - p.iter().sum::<f64>();
    let imax = (0..n).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
    p[imax] += residue;
    p
}

/// Three states, two actions, horizon three. Action 1 pushes towards the
/// rewarding state 2 with probability 0.7; action 0 mostly stays put.
pub fn gridlet3() -> MdpSnapshot {
    gridlet3_with(0.7)
}

/// [`gridlet3`] with the success probability of the rewarding move set to `p_move`.
pub fn gridlet3_with(p_move: f64) -> MdpSnapshot {
    let n = 3;
    let mut kernel = TransitionKernel::uniform(n, 2);
    for s in 0..n {
        let up = (s + 1).min(n - 1);
        let mut stay = vec![0.0; n];
        stay[s] += 0.8;
        stay[s.saturating_sub(1)] += 0.2;
        kernel.row_mut(s, 0).copy_from_slice(&stay);
        let mut go = vec![0.0; n];
        go[up] += p_move;
        go[s] += 1.0 - p_move;
        kernel.row_mut(s, 1).copy_from_slice(&go);
    }
    let reward = QTable::from_rows(&[vec![0.1, 0.0], vec![0.2, 0.1], vec![1.0, 0.6]]);
    MdpSnapshot::new(0, vec![kernel; 3], vec![reward; 3]).expect("valid gridlet")
}

/// [`gridlet3_with`] with the transition rows of the two actions exchanged
/// (rewards unchanged), so the formerly good action now drifts downwards.
pub fn gridlet3_swapped(p_move: f64) -> MdpSnapshot {
    let mut snap = gridlet3_with(p_move);
    for kernel in &mut snap.transitions {
        for s in 0..snap.n_states {
            let stay = kernel.row(s, 0).to_vec();
            let go = kernel.row(s, 1).to_vec();
            kernel.row_mut(s, 0).copy_from_slice(&go);
            kernel.row_mut(s, 1).copy_from_slice(&stay);
        }
    }
    snap
}

/// Named snapshot sources usable from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotSpec {
    Chain2 { horizon: usize },
    Gridlet3 {
        #[serde(default = "default_p_move")]
        p_move: f64,
    },
    Gridlet3Swapped {
        #[serde(default = "default_p_move")]
        p_move: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        seed: u64,
    },
    File { path: String },
}

fn default_p_move() -> f64 {
    0.7
}
