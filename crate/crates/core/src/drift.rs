//! Generators for non-stationary MDP sequences with controlled variation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::SnapshotSpec;
use crate::mdp::{MdpSnapshot, NonstationaryMdp};
use crate::table::l1_distance;

/// A single `(h, s, a)` transition row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRef {
    pub step: usize,
    pub state: usize,
    pub action: usize,
}

/// Serializable description of how episodes evolve from a base snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Stationary,
    /// Base model before `switch_episode`, target from it on (0-based).
    Abrupt {
        switch_episode: usize,
        target: SnapshotSpec,
    },
    /// Linear convex interpolation from base to target.
    Gradual { target: SnapshotSpec },
    RandomWalk {
        per_step_l1: f64,
        #[serde(default)]
        affected: Option<Vec<RowRef>>,
    },
    /// Rewards interpolate linearly to the target's rewards; transitions stay at base.
    RewardOnly { target: SnapshotSpec },
}

fn check_pair(base: &MdpSnapshot, other: &MdpSnapshot) -> Result<()> {
    if !base.same_shape(other) {
        return Err(Error::Shape(
            "snapshots must share states, actions, horizon and initial state".into(),
        ));
    }
    Ok(())
}

/// Episodes `< switch_episode` follow `base`, the rest follow `shifted`.
pub fn make_abrupt(
    base: &MdpSnapshot,
    shifted: &MdpSnapshot,
    switch_episode: usize,
    n_episodes: usize,
) -> Result<NonstationaryMdp> {
    check_pair(base, shifted)?;
    if switch_episode >= n_episodes {
        return Err(Error::InvalidDrift(format!(
            "switch episode {switch_episode} must be below K = {n_episodes}"
        )));
    }
    let episodes = (0..n_episodes)
        .map(|k| if k < switch_episode { base.clone() } else { shifted.clone() })
        .collect();
    NonstationaryMdp::from_episodes(episodes)
}

/// `lambda_k = k / (K - 1)`.
pub fn linear_schedule(n_episodes: usize) -> Vec<f64> {
    match n_episodes {
        0 => Vec::new(),
        1 => vec![1.0],
        n => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    let (Some(&first), Some(&last)) = (schedule.first(), schedule.last()) else {
        return Err(Error::InvalidDrift("empty schedule".into()));
    };
    if schedule.len() > 1 && (first != 0.0 || last != 1.0) {
        return Err(Error::InvalidDrift(format!(
            "schedule must start at 0 and end at 1, got {first} .. {last}"
        )));
    }
    if schedule.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidDrift("schedule weight outside [0, 1]".into()));
    }
    if schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidDrift("schedule is not monotone".into()));
    }
    Ok(())
}

fn mix(a: f64, b: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * a + lambda * b
}

fn mix_snapshot(base: &MdpSnapshot, target: &MdpSnapshot, lp: f64, lr: f64) -> MdpSnapshot {
    let mut out = base.clone();
    for h in 0..base.horizon {
        for s in 0..base.n_states {
            for a in 0..base.n_actions {
                let (pb, pt) = (base.transitions[h].row(s, a), target.transitions[h].row(s, a));
                for (x, (b, t)) in out.transitions[h].row_mut(s, a).iter_mut().zip(pb.iter().zip(pt)) {
                    *x = mix(*b, *t, lp);
                }
                out.rewards[h].set(s, a, mix(base.rewards[h].get(s, a), target.rewards[h].get(s, a), lr));
            }
        }
    }
    out
}

/// `P^k = (1 - lambda_k) P_base + lambda_k P_target`, rewards likewise.
pub fn make_gradual(
    base: &MdpSnapshot,
    target: &MdpSnapshot,
    schedule: &[f64],
) -> Result<NonstationaryMdp> {
    check_pair(base, target)?;
    check_schedule(schedule)?;
    NonstationaryMdp::from_episodes(
        schedule.iter().map(|&l| mix_snapshot(base, target, l, l)).collect(),
    )
}

/// Rewards follow the schedule while transitions stay at `base`.
pub fn make_reward_drift(
    base: &MdpSnapshot,
    target: &MdpSnapshot,
    schedule: &[f64],
) -> Result<NonstationaryMdp> {
    check_pair(base, target)?;
    check_schedule(schedule)?;
    NonstationaryMdp::from_episodes(
        schedule.iter().map(|&l| mix_snapshot(base, target, 0.0, l)).collect(),
    )
}

/// Output of [`make_random_walk`].
#[derive(Debug, Clone)]
pub struct RandomWalkDrift {
    pub mdp: NonstationaryMdp,
    /// Largest realized row L1 change between episode `k` and `k + 1`.
    pub realized_l1: Vec<f64>,
}

/// Every episode moves each affected row by a random zero-sum direction of L1
/// norm `per_step_l1`, followed by Euclidean projection onto the simplex.
pub fn make_random_walk<R: Rng + ?Sized>(
    base: &MdpSnapshot,
    n_episodes: usize,
    per_step_l1: f64,
    affected: Option<&[RowRef]>,
    rng: &mut R,
) -> Result<RandomWalkDrift> {
    if !(0.0..=2.0).contains(&per_step_l1) {
        return Err(Error::InvalidDrift(format!("per-step L1 {per_step_l1} outside [0, 2]")));
    }
    let rows: Vec<RowRef> = match affected {
        Some(rows) => {
            if let Some(r) = rows.iter().find(|r| {
                r.step >= base.horizon || r.state >= base.n_states || r.action >= base.n_actions
            }) {
                return Err(Error::InvalidDrift(format!("row {r:?} out of range")));
            }
            rows.to_vec()
        }
        None => (0..base.horizon)
            .flat_map(|h| {
                (0..base.n_states).flat_map(move |s| {
                    (0..base.n_actions).map(move |a| RowRef {
                        step: h,
                        state: s,
                        action: a,
                    })
                })
            })
            .collect(),
    };
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut realized = Vec::with_capacity(n_episodes.saturating_sub(1));
    let mut current = base.clone();
    for k in 0..n_episodes {
        if k > 0 && per_step_l1 > 0.0 {
            let mut worst: f64 = 0.0;
            for r in &rows {
                let row = current.transitions[r.step].row_mut(r.state, r.action);
                let before = row.to_vec();
                let moved = perturb_row(&before, per_step_l1, rng);
                row.copy_from_slice(&moved);
                worst = worst.max(l1_distance(&before, &moved));
            }
            realized.push(worst);
        } else if k > 0 {
            realized.push(0.0);
        }
        episodes.push(current.clone());
    }
    Ok(RandomWalkDrift {
        mdp: NonstationaryMdp::from_episodes(episodes)?,
        realized_l1: realized,
    })
}

fn perturb_row<R: Rng + ?Sized>(row: &[f64], l1: f64, rng: &mut R) -> Vec<f64> {
    let n = row.len();
    if n < 2 {
        return row.to_vec();
    }
    let mut dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean = dir.iter().sum::<f64>() / n as f64;
    dir.iter_mut().for_each(|d| *d -= mean);
    let norm: f64 = dir.iter().map(|d| d.abs()).sum();
    if norm == 0.0 {
        return row.to_vec();
    }
    let shifted: Vec<f64> = row.iter().zip(&dir).map(|(p, d)| p + d * l1 / norm).collect();
    let mut out = project_to_simplex(&shifted);
    let sum: f64 = out.iter().sum();
    debug_assert!((sum - 1.0).abs() < 1e-9, "projection drifted off the simplex: {sum}");
    if sum != 1.0 {
        out.iter_mut().for_each(|p| *p /= sum);
    }
    out
}

/// Euclidean projection onto `{p : p >= 0, sum p = 1}` (sort-and-threshold).
pub fn project_to_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    y.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Resolves a drift description against a base snapshot.
pub fn build_drift<R: Rng + ?Sized>(
    base: &MdpSnapshot,
    n_episodes: usize,
    spec: &DriftSpec,
    resolve: impl Fn(&SnapshotSpec) -> Result<MdpSnapshot>,
    rng: &mut R,
) -> Result<NonstationaryMdp> {
    match spec {
        DriftSpec::Stationary => NonstationaryMdp::stationary(base.clone(), n_episodes),
        DriftSpec::Abrupt {
            switch_episode,
            target,
        } => make_abrupt(base, &resolve(target)?, *switch_episode, n_episodes),
        DriftSpec::Gradual { target } => {
            make_gradual(base, &resolve(target)?, &linear_schedule(n_episodes))
        }
        DriftSpec::RandomWalk {
            per_step_l1,
            affected,
        } => Ok(make_random_walk(base, n_episodes, *per_step_l1, affected.as_deref(), rng)?.mdp),
        DriftSpec::RewardOnly { target } => {
            make_reward_drift(base, &resolve(target)?, &linear_schedule(n_episodes))
        }
    }
}

/// Overwrites one transition row; a convenience for building shifted snapshots.
pub fn with_row(mut snap: MdpSnapshot, row: RowRef, probs: &[f64]) -> MdpSnapshot {
    snap.transitions[row.step]
        .row_mut(row.state, row.action)
        .copy_from_slice(probs);
    snap
}
