//! Tabular episodic MDPs whose transitions and rewards change between episodes.
//!
//! Episodes and steps are 0-based throughout: episode `k` ranges over
//! `0..n_episodes` and step `h` over `0..horizon`. The value at step `horizon`
//! is identically zero.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{QTable, TransitionKernel};

const ROW_SUM_TOL: f64 = 1e-12;

/// One episode's model: `(S, A, H, P_h, r_h, x_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSnapshot {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    /// `transitions[h]` is the kernel used at step `h`.
    pub transitions: Vec<TransitionKernel>,
    /// `rewards[h]` is the mean reward table at step `h`, entries in `[0, 1]`.
    pub rewards: Vec<QTable>,
}

impl MdpSnapshot {
    pub fn new(
        initial_state: usize,
        transitions: Vec<TransitionKernel>,
        rewards: Vec<QTable>,
    ) -> Result<Self> {
        let first = transitions
            .first()
            .ok_or_else(|| Error::Shape("horizon must be at least 1".into()))?;
        let snap = Self {
            n_states: first.n_states(),
            n_actions: first.n_actions(),
            horizon: transitions.len(),
            initial_state,
            transitions,
            rewards,
        };
        snap.check_shape()?;
        Ok(snap)
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return Err(Error::Shape("empty state, action or step set".into()));
        }
        if self.transitions.len() != self.horizon || self.rewards.len() != self.horizon {
            return Err(Error::Shape(format!(
                "expected {} steps of transitions and rewards, got {} and {}",
                self.horizon,
                self.transitions.len(),
                self.rewards.len()
            )));
        }
        for (h, (p, r)) in self.transitions.iter().zip(&self.rewards).enumerate() {
            if p.n_states() != self.n_states || p.n_actions() != self.n_actions {
                return Err(Error::Shape(format!("transition kernel at step {h}")));
            }
            if r.n_states() != self.n_states || r.n_actions() != self.n_actions {
                return Err(Error::Shape(format!("reward table at step {h}")));
            }
        }
        if self.initial_state >= self.n_states {
            return Err(Error::Shape(format!(
                "initial state {} not below {}",
                self.initial_state, self.n_states
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &MdpSnapshot) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.horizon == other.horizon
            && self.initial_state == other.initial_state
    }

    /// Exact backward induction for `Q*` and `V*`.
    pub fn optimal_values(&self) -> (Vec<QTable>, Vec<Vec<f64>>) {
        let mut q = vec![QTable::zeros(self.n_states, self.n_actions); self.horizon];
        let mut v = vec![vec![0.0; self.n_states]; self.horizon];
        let mut v_next = vec![0.0; self.n_states];
        for h in (0..self.horizon).rev() {
            let mut qh = self.transitions[h].expect(&v_next);
            for (x, r) in qh.as_mut_slice().iter_mut().zip(self.rewards[h].as_slice()) {
                *x += r;
            }
            v[h] = qh.state_max();
            v_next.clone_from(&v[h]);
            q[h] = qh;
        }
        (q, v)
    }

    /// Per-step `V^pi_h` by backward induction; the returned vector has `H + 1` rows.
    pub fn policy_values(&self, policy: &Policy) -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; self.n_states]; self.horizon + 1];
        for h in (0..self.horizon).rev() {
            for s in 0..self.n_states {
                let a = policy.action(h, s);
                let cont: f64 = self.transitions[h]
                    .row(s, a)
                    .iter()
                    .zip(&v[h + 1])
                    .map(|(p, x)| p * x)
                    .sum();
                v[h][s] = self.rewards[h].get(s, a) + cont;
            }
        }
        v
    }

    /// Exact state distribution at every step `0..=H` when following `policy` from `x_1`.
    pub fn state_distributions(&self, policy: &Policy) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon + 1);
        let mut d = vec![0.0; self.n_states];
        d[self.initial_state] = 1.0;
        out.push(d.clone());
        for h in 0..self.horizon {
            let mut next = vec![0.0; self.n_states];
            for (s, &mass) in d.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let row = self.transitions[h].row(s, policy.action(h, s));
                for (n, p) in next.iter_mut().zip(row) {
                    *n += mass * p;
                }
            }
            d = next;
            out.push(d.clone());
        }
        out
    }

    /// Exact state-action occupancy `Pr[(x_h, a_h) = (s, a)]` for each step.
    pub fn occupancy(&self, policy: &Policy) -> Vec<QTable> {
        self.state_distributions(policy)
            .into_iter()
            .take(self.horizon)
            .enumerate()
            .map(|(h, d)| {
                let mut t = QTable::zeros(self.n_states, self.n_actions);
                for (s, mass) in d.into_iter().enumerate() {
                    t.set(s, policy.action(h, s), mass);
                }
                t
            })
            .collect()
    }

    pub fn greedy_policy(q: &[QTable]) -> Policy {
        Policy {
            actions: q
                .iter()
                .map(|qh| (0..qh.n_states()).map(|s| qh.argmax(s)).collect())
                .collect(),
        }
    }
}

/// A non-stationary MDP: one snapshot per episode, all sharing `(S, A, H, x_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct NonstationaryMdp {
    episodes: Vec<MdpSnapshot>,
}

impl NonstationaryMdp {
    /// Assembles per-episode snapshots. Only shapes are checked here; use
    /// [`NonstationaryMdp::validate`] for the probability and reward invariants.
    pub fn from_episodes(episodes: Vec<MdpSnapshot>) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| Error::Shape("at least one episode is required".into()))?;
        first.check_shape()?;
        for (k, e) in episodes.iter().enumerate() {
            e.check_shape()?;
            if !e.same_shape(first) {
                return Err(Error::Shape(format!("episode {k} differs in (S, A, H, x_1)")));
            }
        }
        Ok(Self { episodes })
    }

    /// The same snapshot repeated for `n_episodes` episodes.
    pub fn stationary(snapshot: MdpSnapshot, n_episodes: usize) -> Result<Self> {
        Self::from_episodes(vec![snapshot; n_episodes])
    }

    pub fn n_states(&self) -> usize {
        self.episodes[0].n_states
    }

    pub fn n_actions(&self) -> usize {
        self.episodes[0].n_actions
    }

    pub fn horizon(&self) -> usize {
        self.episodes[0].horizon
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn initial_state(&self) -> usize {
        self.episodes[0].initial_state
    }

    pub fn episodes(&self) -> &[MdpSnapshot] {
        &self.episodes
    }

    pub fn episode(&self, k: usize) -> Result<&MdpSnapshot> {
        self.episodes.get(k).ok_or(Error::EpisodeOutOfRange {
            episode: k,
            n_episodes: self.n_episodes(),
        })
    }

    pub(crate) fn check_step(&self, h: usize) -> Result<()> {
        if h >= self.horizon() {
            return Err(Error::StepOutOfRange {
                step: h,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    pub fn kernel(&self, k: usize, h: usize) -> &TransitionKernel {
        &self.episodes[k].transitions[h]
    }

    pub fn reward(&self, k: usize, h: usize) -> &QTable {
        &self.episodes[k].rewards[h]
    }

    /// Reports every broken row-sum, sign and reward-range invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (k, ep) in self.episodes.iter().enumerate() {
            for h in 0..ep.horizon {
                for s in 0..ep.n_states {
                    for a in 0..ep.n_actions {
                        let row = ep.transitions[h].row(s, a);
                        let at = RowIndex {
                            episode: k,
                            step: h,
                            state: s,
                            action: a,
                        };
                        if let Some(&p) = row.iter().find(|p| !(**p >= 0.0)) {
                            violations.push(Violation {
                                at,
                                kind: ViolationKind::NegativeProbability(p),
                            });
                        }
                        let sum: f64 = row.iter().sum();
                        if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                            violations.push(Violation {
                                at,
                                kind: ViolationKind::RowSum(sum),
                            });
                        }
                        let r = ep.rewards[h].get(s, a);
                        if !(0.0..=1.0).contains(&r) {
                            violations.push(Violation {
                                at,
                                kind: ViolationKind::RewardOutOfRange(r),
                            });
                        }
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Shape-checked and invariant-checked construction.
    pub fn new_validated(episodes: Vec<MdpSnapshot>) -> Result<Self> {
        let mdp = Self::from_episodes(episodes)?;
        let report = mdp.validate();
        if report.is_ok() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mdp: Self = serde_json::from_str(&text)?;
        let report = mdp.validate();
        if !report.is_ok() {
            return Err(Error::InvalidMdp(report));
        }
        Ok(mdp)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn optimal_values(&self, k: usize) -> Result<ValueTables> {
        let (q_star, v_star) = self.episode(k)?.optimal_values();
        Ok(ValueTables {
            episode: k,
            q_star,
            v_star,
        })
    }

    /// `V^pi_{1;(*,k)}(x_1)`, exact.
    pub fn evaluate_policy(&self, k: usize, policy: &Policy) -> Result<f64> {
        let ep = self.episode(k)?;
        policy.check(ep)?;
        Ok(ep.policy_values(policy)[0][ep.initial_state])
    }

    pub fn sample_episode<R: Rng + ?Sized>(
        &self,
        k: usize,
        policy: &Policy,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let ep = self.episode(k)?;
        policy.check(ep)?;
        let mut steps = Vec::with_capacity(ep.horizon);
        let mut x = ep.initial_state;
        for h in 0..ep.horizon {
            let a = policy.action(h, x);
            let next = sample_index(ep.transitions[h].row(x, a), rng);
            steps.push(TrajectoryStep {
                state: x,
                action: a,
                reward: ep.rewards[h].get(x, a),
                next_state: next,
            });
            x = next;
        }
        Ok(Trajectory { episode: k, steps })
    }

    /// Dynamic regret against the per-episode optimum, with exact policy evaluation.
    pub fn dynamic_regret(&self, policies: &[Policy]) -> Result<RegretReport> {
        if policies.len() != self.n_episodes() {
            return Err(Error::PolicyCount {
                expected: self.n_episodes(),
                got: policies.len(),
            });
        }
        let mut increments = Vec::with_capacity(policies.len());
        for (k, pi) in policies.iter().enumerate() {
            let v_star = self.optimal_values(k)?.initial_value(self.initial_state());
            increments.push(v_star - self.evaluate_policy(k, pi)?);
        }
        Ok(RegretReport {
            total: increments.iter().sum(),
            increments,
        })
    }

    /// `sup_{s,a} ||P_h^a - P_h^b||_1` between two episodes.
    pub fn transition_distance(&self, ka: usize, kb: usize, h: usize) -> f64 {
        self.kernel(ka, h).sup_l1_distance(self.kernel(kb, h))
    }

    /// `sup_{s,a} |r_h^a - r_h^b|` between two episodes.
    pub fn reward_distance(&self, ka: usize, kb: usize, h: usize) -> f64 {
        self.reward(ka, h).max_abs_diff(self.reward(kb, h))
    }

    /// Adjacent-episode variation summed over episodes and steps, with episode 0
    /// compared against itself.
    pub fn variation_budgets(&self) -> VariationBudgets {
        let mut delta_r = 0.0;
        let mut delta_p = 0.0;
        for k in 1..self.n_episodes() {
            for h in 0..self.horizon() {
                delta_r += self.reward_distance(k, k - 1, h);
                delta_p += self.transition_distance(k, k - 1, h);
            }
        }
        VariationBudgets { delta_r, delta_p }
    }

    /// Local variation over the window `t = max(0, k - w) ..= k`.
    pub fn local_variation(&self, k: usize, h: usize, w: usize) -> Result<LocalVariation> {
        self.episode(k)?;
        self.check_step(h)?;
        Ok(self.local_variation_from(k.saturating_sub(w), k, h))
    }

    /// Local variation over the explicit window `t = start ..= k`.
    pub(crate) fn local_variation_from(&self, start: usize, k: usize, h: usize) -> LocalVariation {
        let mut out = LocalVariation::default();
        for t in start..k {
            out.delta_p += self.transition_distance(k, t, h);
            out.delta_r += self.reward_distance(k, t, h);
        }
        out
    }

    /// Largest windowed average of adjacent-episode variation, maximized over steps.
    ///
    /// The average of a contiguous run never exceeds its largest term, so the
    /// maximum is attained by a single adjacent pair.
    pub fn average_variation(&self) -> AverageVariation {
        let mut out = AverageVariation::default();
        for k in 1..self.n_episodes() {
            for h in 0..self.horizon() {
                out.l = out.l.max(self.transition_distance(k, k - 1, h));
                out.l_theta = out.l_theta.max(self.reward_distance(k, k - 1, h));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    n_episodes: usize,
    initial_state: usize,
    transitions: Vec<Vec<TransitionKernel>>,
    rewards: Vec<Vec<QTable>>,
}

impl TryFrom<MdpDocument> for NonstationaryMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        if doc.transitions.len() != doc.n_episodes || doc.rewards.len() != doc.n_episodes {
            return Err(Error::Shape(format!(
                "n_episodes = {} but {} transition and {} reward episodes",
                doc.n_episodes,
                doc.transitions.len(),
                doc.rewards.len()
            )));
        }
        let episodes = doc
            .transitions
            .into_iter()
            .zip(doc.rewards)
            .map(|(transitions, rewards)| MdpSnapshot {
                n_states: doc.n_states,
                n_actions: doc.n_actions,
                horizon: doc.horizon,
                initial_state: doc.initial_state,
                transitions,
                rewards,
            })
            .collect();
        Self::from_episodes(episodes)
    }
}

impl From<NonstationaryMdp> for MdpDocument {
    fn from(mdp: NonstationaryMdp) -> Self {
        let first = &mdp.episodes[0];
        let (n_states, n_actions, horizon, initial_state) =
            (first.n_states, first.n_actions, first.horizon, first.initial_state);
        let n_episodes = mdp.episodes.len();
        let (transitions, rewards) = mdp
            .episodes
            .into_iter()
            .map(|e| (e.transitions, e.rewards))
            .unzip();
        MdpDocument {
            n_states,
            n_actions,
            horizon,
            n_episodes,
            initial_state,
            transitions,
            rewards,
        }
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    last_positive
}

/// A deterministic Markov policy `pi_h(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    /// `actions[h][s]`.
    pub actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Self {
            actions: vec![vec![action; n_states]; horizon],
        }
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub(crate) fn check(&self, mdp: &MdpSnapshot) -> Result<()> {
        if self.actions.len() != mdp.horizon {
            return Err(Error::InvalidPolicy(format!(
                "{} steps, horizon is {}",
                self.actions.len(),
                mdp.horizon
            )));
        }
        for (h, row) in self.actions.iter().enumerate() {
            if row.len() != mdp.n_states {
                return Err(Error::InvalidPolicy(format!("step {h} covers {} states", row.len())));
            }
            if let Some(a) = row.iter().find(|&&a| a >= mdp.n_actions) {
                return Err(Error::InvalidPolicy(format!("action {a} at step {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub episode: usize,
    /// `q_star[h]`.
    pub q_star: Vec<QTable>,
    /// `v_star[h][s]`; the step after the horizon is implicitly zero.
    pub v_star: Vec<Vec<f64>>,
}

impl ValueTables {
    pub fn initial_value(&self, x1: usize) -> f64 {
        self.v_star[0][x1]
    }

    pub fn greedy_policy(&self) -> Policy {
        MdpSnapshot::greedy_policy(&self.q_star)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub total: f64,
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariationBudgets {
    pub delta_r: f64,
    pub delta_p: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalVariation {
    pub delta_p: f64,
    pub delta_r: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageVariation {
    pub l: f64,
    pub l_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIndex {
    pub episode: usize,
    pub step: usize,
    pub state: usize,
    pub action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    RowSum(f64),
    NegativeProbability(f64),
    RewardOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub at: RowIndex,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let RowIndex {
            episode,
            step,
            state,
            action,
        } = self.at;
        write!(f, "(k={episode}, h={step}, s={state}, a={action}): ")?;
        match self.kind {
            ViolationKind::RowSum(sum) => write!(f, "row sum {sum} ≠ 1"),
            ViolationKind::NegativeProbability(p) => write!(f, "negative probability {p}"),
            ViolationKind::RewardOutOfRange(r) => write!(f, "reward {r} out of [0,1]"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
