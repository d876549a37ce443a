//! Finite enumerated function classes `F` and `G`, Bellman backups, and checks
//! of realizability and generalized completeness.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpSnapshot, NonstationaryMdp, Policy};
use crate::table::QTable;

/// Two tables closer than this (max-entry distance) count as the same function.
pub const DEDUP_TOL: f64 = 1e-12;

/// A full tuple `(f_1, ..., f_H)`; `f_{H+1}` is implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QFunction {
    pub tables: Vec<QTable>,
}

impl QFunction {
    pub fn new(tables: Vec<QTable>) -> Self {
        Self { tables }
    }

    pub fn zeros(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self::new(vec![QTable::zeros(n_states, n_actions); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    pub fn step(&self, h: usize) -> &QTable {
        &self.tables[h]
    }

    /// Component `h + 1`, or `None` past the horizon (the zero function).
    pub fn next(&self, h: usize) -> Option<&QTable> {
        self.tables.get(h + 1)
    }

    /// `max_a f_1(x, a)`.
    pub fn initial_value(&self, x1: usize) -> f64 {
        self.tables[0].row(x1).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_policy(&self) -> Policy {
        MdpSnapshot::greedy_policy(&self.tables)
    }

    pub fn max_abs_diff(&self, other: &QFunction) -> f64 {
        self.tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Entry range check: step `h` (0-based) must lie in `[0, H - h]`.
    pub fn in_range(&self, tol: f64) -> bool {
        let horizon = self.horizon();
        self.tables.iter().enumerate().all(|(h, t)| {
            let hi = (horizon - h) as f64;
            t.as_slice().iter().all(|&v| v >= -tol && v <= hi + tol)
        })
    }
}

/// Greedy policy of one class member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPolicyOf {
    pub source: usize,
    pub policy: Policy,
}

/// How a class was assembled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default)]
    pub n_optimal: usize,
    #[serde(default)]
    pub n_distractors: usize,
    #[serde(default)]
    pub perturb_scale: f64,
    #[serde(default)]
    pub closure: bool,
    /// Entries moved into the legal range while building the class.
    #[serde(default)]
    pub clipped_entries: usize,
}

/// The class `F` (members) together with the auxiliary class `G ⊇ F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    pub members: Vec<QFunction>,
    pub aux_members: Vec<QFunction>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl FunctionClass {
    /// Builds a class, adding any member missing from `aux` so that `F ⊆ G`.
    pub fn new(members: Vec<QFunction>, aux: Vec<QFunction>, provenance: Provenance) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyClass)?;
        let shape = (first.horizon(), first.tables[0].n_states(), first.tables[0].n_actions());
        for f in members.iter().chain(&aux) {
            if f.horizon() != shape.0
                || f.tables.iter().any(|t| t.n_states() != shape.1 || t.n_actions() != shape.2)
            {
                return Err(Error::Shape("class members differ in shape".into()));
            }
        }
        let mut aux_members = aux;
        for m in &members {
            push_unique(&mut aux_members, m.clone());
        }
        Ok(Self {
            members,
            aux_members,
            provenance,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let class: Self = serde_json::from_str(&text)?;
        Self::new(class.members, class.aux_members, class.provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.members[0].horizon()
    }

    /// Distinct step-`h` components of `G`, i.e. the set `G_h`.
    pub fn aux_step_components(&self, h: usize) -> Vec<QTable> {
        let mut out: Vec<QTable> = Vec::new();
        for g in &self.aux_members {
            let t = g.step(h);
            if !out.iter().any(|o| o.max_abs_diff(t) <= DEDUP_TOL) {
                out.push(t.clone());
            }
        }
        out
    }

    pub fn greedy_policy_of(&self, index: usize) -> GreedyPolicyOf {
        GreedyPolicyOf {
            source: index,
            policy: self.members[index].greedy_policy(),
        }
    }

    /// Index of the first member within `tol` of `target`.
    pub fn find_member(&self, target: &QFunction, tol: f64) -> Option<usize> {
        self.members.iter().position(|m| m.max_abs_diff(target) <= tol)
    }
}

fn push_unique(list: &mut Vec<QFunction>, f: QFunction) -> bool {
    if list.iter().any(|g| g.max_abs_diff(&f) <= DEDUP_TOL) {
        return false;
    }
    list.push(f);
    true
}

/// `(T_h f_{h+1})(x, a) = r_h(x, a) + sum_x' P_h(x'|x, a) max_a' f_{h+1}(x', a')`
/// for a single snapshot; `None` stands for the zero function.
pub fn backup(snap: &MdpSnapshot, h: usize, f_next: Option<&QTable>) -> QTable {
    let v_next = match f_next {
        Some(f) => f.state_max(),
        None => vec![0.0; snap.n_states],
    };
    let mut out = snap.transitions[h].expect(&v_next);
    for (x, r) in out.as_mut_slice().iter_mut().zip(snap.rewards[h].as_slice()) {
        *x += r;
    }
    out
}

/// The Bellman operator of episode `k` at step `h`.
pub fn bellman_apply(
    mdp: &NonstationaryMdp,
    k: usize,
    h: usize,
    f_next: Option<&QTable>,
) -> Result<QTable> {
    let snap = mdp.episode(k)?;
    mdp.check_step(h)?;
    if let Some(f) = f_next {
        if f.n_states() != snap.n_states || f.n_actions() != snap.n_actions {
            return Err(Error::Shape(format!(
                "next-step table is {}x{}, MDP is {}x{}",
                f.n_states(),
                f.n_actions(),
                snap.n_states,
                snap.n_actions
            )));
        }
    }
    Ok(backup(snap, h, f_next))
}

/// `Q*` of one episode as a class member.
pub fn optimal_member(mdp: &NonstationaryMdp, k: usize) -> Result<QFunction> {
    Ok(QFunction::new(mdp.optimal_values(k)?.q_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityReport {
    pub passed: bool,
    /// Per episode, the distance from `Q*_k` to the closest member.
    pub worst_gap_per_episode: Vec<f64>,
    pub matching_member: Vec<Option<usize>>,
}

pub fn check_realizability(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    tol: f64,
) -> Result<RealizabilityReport> {
    let mut gaps = Vec::with_capacity(mdp.n_episodes());
    let mut matching = Vec::with_capacity(mdp.n_episodes());
    for k in 0..mdp.n_episodes() {
        let q = optimal_member(mdp, k)?;
        let (best, gap) = class
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.max_abs_diff(&q)))
            .fold((None, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (Some(i), d) } else { acc });
        gaps.push(gap);
        matching.push(if gap <= tol { best } else { None });
    }
    Ok(RealizabilityReport {
        passed: gaps.iter().all(|&g| g <= tol),
        worst_gap_per_episode: gaps,
        matching_member: matching,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub passed: bool,
    pub worst_violation: f64,
    /// `(member, episode, step)` attaining the worst violation.
    pub worst_at: Option<(usize, usize, usize)>,
}

/// Checks `T_h^k F_{h+1} ⊆ G_h` up to `tol` for all episodes and steps.
pub fn check_completeness(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    tol: f64,
) -> Result<CompletenessReport> {
    let components: Vec<Vec<QTable>> = (0..class.horizon())
        .map(|h| class.aux_step_components(h))
        .collect();
    let mut worst = 0.0;
    let mut worst_at = None;
    for (k, snap) in mdp.episodes().iter().enumerate() {
        for (i, f) in class.members.iter().enumerate() {
            for (h, g_h) in components.iter().enumerate() {
                let target = backup(snap, h, f.next(h));
                let dist = g_h
                    .iter()
                    .map(|g| g.max_abs_diff(&target))
                    .fold(f64::INFINITY, f64::min);
                if dist > worst || worst_at.is_none() {
                    worst = dist;
                    worst_at = Some((i, k, h));
                }
            }
        }
    }
    Ok(CompletenessReport {
        passed: worst <= tol,
        worst_violation: worst,
        worst_at,
    })
}

/// A class containing every episode's `Q*` plus clipped random perturbations of
/// them. With `closure`, `G` also receives every Bellman backup tuple
/// `(T_1^k f_2, ..., T_H^k 0)` of every member, so completeness holds exactly.
pub fn build_realizable_class<R: Rng + ?Sized>(
    mdp: &NonstationaryMdp,
    n_distractors: usize,
    perturb_scale: f64,
    closure: bool,
    rng: &mut R,
) -> Result<FunctionClass> {
    if !(perturb_scale >= 0.0) {
        return Err(Error::Config(format!("perturb scale {perturb_scale} must be nonnegative")));
    }
    let horizon = mdp.horizon();
    let mut optimal: Vec<QFunction> = Vec::new();
    for k in 0..mdp.n_episodes() {
        push_unique(&mut optimal, optimal_member(mdp, k)?);
    }
    let n_optimal = optimal.len();
    let mut members = optimal.clone();
    let mut clipped = 0;
    for _ in 0..n_distractors {
        let base = optimal.choose(rng).expect("at least one episode");
        let tables = base
            .tables
            .iter()
            .enumerate()
            .map(|(h, t)| {
                let hi = (horizon - h) as f64;
                let mut out = t.clone();
                for v in out.as_mut_slice() {
                    let raw = *v + perturb_scale * (2.0 * rng.gen::<f64>() - 1.0);
                    let c = raw.clamp(0.0, hi);
                    if c != raw {
                        clipped += 1;
                    }
                    *v = c;
                }
                out
            })
            .collect();
        push_unique(&mut members, QFunction::new(tables));
    }
    let mut aux = members.clone();
    if closure {
        for snap in mdp.episodes() {
            for f in &members {
                let tables = (0..horizon).map(|h| backup(snap, h, f.next(h))).collect();
                push_unique(&mut aux, QFunction::new(tables));
            }
        }
    }
    FunctionClass::new(
        members,
        aux,
        Provenance {
            source: "realizable".into(),
            n_optimal,
            n_distractors,
            perturb_scale,
            closure,
            clipped_entries: clipped,
        },
    )
}
