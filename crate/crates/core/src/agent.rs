//! Sliding-window optimistic exploration (full-information and bandit
//! feedback), window selection, and comparison baselines.

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_class::{optimal_member, FunctionClass};
use crate::mdp::{NonstationaryMdp, Policy, Trajectory};
use crate::table::QTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// The whole reward function of the current episode is revealed.
    FullInformation,
    /// Only rewards collected along the trajectory are observed.
    Bandit,
}

/// Source of the local-variation slack in the confidence constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationOracle {
    ExactFromEnv,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Full,
    Fixed(usize),
}

impl Window {
    pub fn size(self, n_episodes: usize) -> usize {
        match self {
            Window::Full => n_episodes,
            Window::Fixed(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpec {
    Value(f64),
    /// `beta = c H^2 log(K H |G| / delta)`.
    Derived { c: f64, delta: f64 },
}

impl BetaSpec {
    pub fn resolve(self, horizon: usize, n_episodes: usize, card_g: usize) -> Result<f64> {
        match self {
            BetaSpec::Value(b) if b >= 0.0 => Ok(b),
            BetaSpec::Value(b) => Err(Error::Config(format!("beta {b} is negative"))),
            BetaSpec::Derived { c, delta } => {
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(Error::Config(format!("delta {delta} outside (0, 1]")));
                }
                if !(c >= 0.0) {
                    return Err(Error::Config(format!("c {c} is negative")));
                }
                let h = horizon as f64;
                Ok(c * h * h * ((n_episodes * horizon * card_g) as f64 / delta).ln())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub window: Window,
    pub beta: BetaSpec,
    pub feedback: Feedback,
    pub variation_oracle: VariationOracle,
    /// Reset data and confidence set every `restart` episodes.
    #[serde(default)]
    pub restart: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            window: Window::Full,
            beta: BetaSpec::Derived { c: 0.5, delta: 0.2 },
            feedback: Feedback::FullInformation,
            variation_oracle: VariationOracle::ExactFromEnv,
            restart: None,
        }
    }
}

/// `(x_h^t, a_h^t, x_{h+1}^t, r_h^t)` collected at episode `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// Per-step transition data, one entry per step and episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowDataset {
    steps: Vec<Vec<DataPoint>>,
}

impl SlidingWindowDataset {
    pub fn new(horizon: usize) -> Self {
        Self {
            steps: vec![Vec::new(); horizon],
        }
    }

    pub fn push(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.steps.len() != self.steps.len() {
            return Err(Error::Shape(format!(
                "trajectory has {} steps, dataset {}",
                traj.steps.len(),
                self.steps.len()
            )));
        }
        if let Some(last) = self.steps[0].last() {
            if traj.episode <= last.episode {
                return Err(Error::Config(format!(
                    "episode {} added after episode {}",
                    traj.episode, last.episode
                )));
            }
        }
        for (data, s) in self.steps.iter_mut().zip(&traj.steps) {
            data.push(DataPoint {
                episode: traj.episode,
                state: s.state,
                action: s.action,
                next_state: s.next_state,
                reward: s.reward,
            });
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.steps.iter_mut().for_each(Vec::clear);
    }

    pub fn step(&self, h: usize) -> &[DataPoint] {
        &self.steps[h]
    }

    /// Entries of step `h` from episodes `start ..= end`.
    pub fn window(&self, h: usize, start: usize, end: usize) -> &[DataPoint] {
        let data = &self.steps[h];
        let lo = data.partition_point(|d| d.episode < start);
        let hi = data.partition_point(|d| d.episode <= end);
        &data[lo..hi.max(lo)]
    }
}

/// Which reward enters the regression target.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    /// The latest reward function `r_h^k`, applied to every datapoint.
    Function(&'a QTable),
    /// The reward observed when the datapoint was collected.
    Realized,
}

/// `sum_t (xi(x_t, a_t) - rho_t - max_a' zeta(x'_t, a'))^2`; `zeta = None` is zero.
pub fn sw_bellman_loss(
    xi: &QTable,
    zeta_next: Option<&QTable>,
    data: &[DataPoint],
    reward: RewardSource<'_>,
) -> f64 {
    let v_next = zeta_next.map(QTable::state_max);
    data.iter()
        .map(|d| {
            let rho = match reward {
                RewardSource::Function(r) => r.get(d.state, d.action),
                RewardSource::Realized => d.reward,
            };
            let m = v_next.as_ref().map_or(0.0, |v| v[d.next_state]);
            (xi.get(d.state, d.action) - rho - m).powi(2)
        })
        .sum()
}

/// Sufficient statistics of a data window per `(x, a, x')`: count, sum of
/// targets' reward part and its square. Losses of many candidate tables
/// against the same next-step function then cost `O(S A)` each.
struct WindowStats {
    n_states: usize,
    n_actions: usize,
    count: Vec<f64>,
    rho_sum: Vec<f64>,
    rho_sq: Vec<f64>,
}

impl WindowStats {
    fn new(n_states: usize, n_actions: usize, data: &[DataPoint], reward: RewardSource<'_>) -> Self {
        let len = n_states * n_actions * n_states;
        let mut out = Self {
            n_states,
            n_actions,
            count: vec![0.0; len],
            rho_sum: vec![0.0; len],
            rho_sq: vec![0.0; len],
        };
        for d in data {
            let rho = match reward {
                RewardSource::Function(r) => r.get(d.state, d.action),
                RewardSource::Realized => d.reward,
            };
            let i = (d.state * n_actions + d.action) * n_states + d.next_state;
            out.count[i] += 1.0;
            out.rho_sum[i] += rho;
            out.rho_sq[i] += rho * rho;
        }
        out
    }

    /// Per `(x, a)`: `(N, sum (rho + m), sum (rho + m)^2)` for next-state values `m`.
    fn moments(&self, v_next: &[f64]) -> Vec<(f64, f64, f64)> {
        let s = self.n_states;
        (0..s * self.n_actions)
            .map(|xa| {
                let mut acc = (0.0, 0.0, 0.0);
                for (y, &m) in v_next.iter().enumerate() {
                    let i = xa * s + y;
                    let n = self.count[i];
                    if n == 0.0 {
                        continue;
                    }
                    acc.0 += n;
                    acc.1 += self.rho_sum[i] + n * m;
                    acc.2 += self.rho_sq[i] + 2.0 * m * self.rho_sum[i] + n * m * m;
                }
                acc
            })
            .collect()
    }
}

fn loss_from_moments(xi: &QTable, moments: &[(f64, f64, f64)]) -> f64 {
    xi.as_slice()
        .iter()
        .zip(moments)
        .filter(|(_, m)| m.0 > 0.0)
        .map(|(&x, &(n, s1, s2))| n * x * x - 2.0 * x * s1 + s2)
        .sum()
}

/// The surviving members `B^k` with per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    /// `None` for the initial set `B^0 = F`.
    pub episode: Option<usize>,
    pub members: Vec<usize>,
    pub window_start: usize,
    /// Variation slack added at each step.
    pub slack: Vec<f64>,
}

impl ConfidenceSet {
    pub fn initial(class: &FunctionClass) -> Self {
        Self {
            episode: None,
            members: (0..class.len()).collect(),
            window_start: 0,
            slack: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, member: usize) -> bool {
        self.members.binary_search(&member).is_ok()
    }
}

/// Precomputed pieces of the confidence-set update for one class.
pub struct ConfidenceUpdater<'a> {
    class: &'a FunctionClass,
    components: Vec<Vec<QTable>>,
    next_values: Vec<Vec<Vec<f64>>>,
    pub beta: f64,
    pub window: usize,
    pub feedback: Feedback,
    pub variation_oracle: VariationOracle,
}

impl<'a> ConfidenceUpdater<'a> {
    pub fn new(class: &'a FunctionClass, beta: f64, window: usize, config: &AgentConfig) -> Self {
        let horizon = class.horizon();
        let n_states = class.members[0].step(0).n_states();
        let components = (0..horizon).map(|h| class.aux_step_components(h)).collect();
        let next_values = class
            .members
            .iter()
            .map(|f| {
                (0..horizon)
                    .map(|h| f.next(h).map_or_else(|| vec![0.0; n_states], QTable::state_max))
                    .collect()
            })
            .collect();
        Self {
            class,
            components,
            next_values,
            beta,
            window,
            feedback: config.feedback,
            variation_oracle: config.variation_oracle,
        }
    }

    pub fn from_config(class: &'a FunctionClass, config: &AgentConfig, n_episodes: usize) -> Result<Self> {
        let beta = config.beta.resolve(class.horizon(), n_episodes, class.aux_members.len())?;
        let window = config.window.size(n_episodes);
        if window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(Self::new(class, beta, window, config))
    }

    /// `B^k` from the data of episodes `max(floor, k - w) ..= k`.
    pub fn update(
        &self,
        data: &SlidingWindowDataset,
        mdp: &NonstationaryMdp,
        k: usize,
        floor: usize,
    ) -> Result<ConfidenceSet> {
        mdp.episode(k)?;
        let horizon = self.class.horizon();
        let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
        let start = floor.max(k.saturating_sub(self.window));
        let h_f = horizon as f64;
        let mut slack = Vec::with_capacity(horizon);
        let mut stats = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let s = match self.variation_oracle {
                VariationOracle::Zero => 0.0,
                VariationOracle::ExactFromEnv => {
                    let local = mdp.local_variation_from(start, k, h);
                    let mut s = 2.0 * h_f * h_f * local.delta_p;
                    if self.feedback == Feedback::Bandit {
                        s += 2.0 * h_f * local.delta_r;
                    }
                    s
                }
            };
            slack.push(s);
            let reward = match self.feedback {
                Feedback::FullInformation => RewardSource::Function(mdp.reward(k, h)),
                Feedback::Bandit => RewardSource::Realized,
            };
            stats.push(WindowStats::new(n_states, n_actions, data.window(h, start, k), reward));
        }
        let members = (0..self.class.len())
            .filter(|&i| {
                let f = &self.class.members[i];
                (0..horizon).all(|h| {
                    let moments = stats[h].moments(&self.next_values[i][h]);
                    let own = loss_from_moments(f.step(h), &moments);
                    let best = self.components[h]
                        .iter()
                        .map(|g| loss_from_moments(g, &moments))
                        .fold(f64::INFINITY, f64::min);
                    own <= best + self.beta + slack[h]
                })
            })
            .collect::<Vec<_>>();
        if members.is_empty() {
            warn!("confidence set empty after episode {k}; beta = {} is too small", self.beta);
        }
        Ok(ConfidenceSet {
            episode: Some(k),
            members,
            window_start: start,
            slack,
        })
    }
}

pub fn update_confidence_set(
    class: &FunctionClass,
    data: &SlidingWindowDataset,
    k: usize,
    config: &AgentConfig,
    mdp: &NonstationaryMdp,
) -> Result<ConfidenceSet> {
    ConfidenceUpdater::from_config(class, config, mdp.n_episodes())?.update(data, mdp, k, 0)
}

/// The member of `B` with the largest `max_a f_1(x_1, a)`, lowest index on ties.
pub fn optimistic_select(b: &ConfidenceSet, class: &FunctionClass, x1: usize) -> Result<(usize, Policy)> {
    let mut best: Option<(usize, f64)> = None;
    for &i in &b.members {
        let v = class.members[i].initial_value(x1);
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyConfidenceSet {
        episode: b.episode.unwrap_or(0),
    })?;
    Ok((i, class.members[i].greedy_policy()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// `None` for the oracle baseline.
    pub chosen: Option<usize>,
    pub policy: Policy,
    pub trajectory: Trajectory,
    /// `|B^k|` after the update at the end of the episode.
    pub conf_set_size: usize,
    pub qstar_in_set: bool,
    /// Optimism against the previous episode's optimum, when `Q*` of that episode was in the set.
    pub optimism_ok: Option<bool>,
    pub regret_increment: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub config: AgentConfig,
    pub seed: Option<u64>,
    pub beta: f64,
    pub window: usize,
    pub episodes: Vec<EpisodeRecord>,
    pub total_regret: f64,
    /// `Q*_k ∈ B^k` for every episode.
    pub qstar_always_in_set: bool,
    /// Entries clipped while the class was built; nonzero means the inf over `G`
    /// saw clipped candidates.
    pub class_clipped_entries: usize,
}

impl RunResult {
    pub fn regret_curve(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.cum_regret).collect()
    }

    pub fn mean_conf_set_size(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.conf_set_size as f64).sum::<f64>() / self.episodes.len() as f64
    }
}

struct Reference {
    v_star: Vec<f64>,
    qstar_index: Vec<Option<usize>>,
}

fn reference(mdp: &NonstationaryMdp, class: &FunctionClass) -> Result<Reference> {
    let x1 = mdp.initial_state();
    let mut v_star = Vec::with_capacity(mdp.n_episodes());
    let mut qstar_index = Vec::with_capacity(mdp.n_episodes());
    let mut prev: Option<(crate::func_class::QFunction, Option<usize>)> = None;
    for k in 0..mdp.n_episodes() {
        let q = optimal_member(mdp, k)?;
        v_star.push(q.initial_value(x1));
        // consecutive episodes often share Q*, skip the class scan then
        let idx = match &prev {
            Some((pq, idx)) if pq == &q => *idx,
            _ => class.find_member(&q, 1e-9),
        };
        qstar_index.push(idx);
        prev = Some((q, idx));
    }
    if qstar_index.iter().any(Option::is_none) {
        warn!("class does not contain Q* of every episode");
    }
    Ok(Reference { v_star, qstar_index })
}

/// Sliding-window optimistic exploration (or its bandit variant).
pub fn run_swopea<R: Rng + ?Sized>(
    mdp: &NonstationaryMdp,
    class: &FunctionClass,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<RunResult> {
    run_inner(mdp, class, config, rng, "sw_opea")
}

fn run_inner<R: Rng + ?Sized>(
    mdp: &NonstationaryMdp,
    class: &FunctionClass,
    config: &AgentConfig,
    rng: &mut R,
    algorithm: &str,
) -> Result<RunResult> {
    if class.horizon() != mdp.horizon() {
        return Err(Error::Shape("class horizon differs from the MDP".into()));
    }
    if config.restart == Some(0) {
        return Err(Error::Config("restart period must be at least 1".into()));
    }
    let n_episodes = mdp.n_episodes();
    let x1 = mdp.initial_state();
    let updater = ConfidenceUpdater::from_config(class, config, n_episodes)?;
    let refs = reference(mdp, class)?;
    let mut data = SlidingWindowDataset::new(mdp.horizon());
    let mut b = ConfidenceSet::initial(class);
    let mut prev_qstar_in = false;
    let mut floor = 0;
    let mut cum = 0.0;
    let mut episodes = Vec::with_capacity(n_episodes);
    for k in 0..n_episodes {
        if let Some(tau) = config.restart {
            if k > 0 && k % tau == 0 {
                data.clear();
                b = ConfidenceSet::initial(class);
                floor = k;
                prev_qstar_in = false;
            }
        }
        let (chosen, policy) = optimistic_select(&b, class, x1)?;
        let optimism_ok = (k > 0 && prev_qstar_in)
            .then(|| class.members[chosen].initial_value(x1) >= refs.v_star[k - 1] - 1e-12);
        let trajectory = mdp.sample_episode(k, &policy, rng)?;
        data.push(&trajectory)?;
        b = updater.update(&data, mdp, k, floor)?;
        let qstar_in_set = refs.qstar_index[k].is_some_and(|i| b.contains(i));
        prev_qstar_in = qstar_in_set;
        let regret_increment = refs.v_star[k] - mdp.evaluate_policy(k, &policy)?;
        cum += regret_increment;
        debug!("episode {k}: member {chosen}, |B| = {}, regret {regret_increment:.4}", b.len());
        episodes.push(EpisodeRecord {
            episode: k,
            chosen: Some(chosen),
            policy,
            trajectory,
            conf_set_size: b.len(),
            qstar_in_set,
            optimism_ok,
            regret_increment,
            cum_regret: cum,
        });
    }
    Ok(finish(algorithm, config, updater.beta, updater.window, episodes, class))
}

fn finish(
    algorithm: &str,
    config: &AgentConfig,
    beta: f64,
    window: usize,
    episodes: Vec<EpisodeRecord>,
    class: &FunctionClass,
) -> RunResult {
    RunResult {
        algorithm: algorithm.to_string(),
        config: *config,
        seed: None,
        beta,
        window,
        total_regret: episodes.last().map_or(0.0, |e| e.cum_regret),
        qstar_always_in_set: episodes.iter().all(|e| e.qstar_in_set),
        class_clipped_entries: class.provenance.clipped_entries,
        episodes,
    }
}

/// Window size from the average variation, `log |G|` and `d`; the bandit
/// rate also counts reward drift.
pub fn choose_window(
    l: f64,
    l_theta: f64,
    horizon: usize,
    n_episodes: usize,
    d: usize,
    log_card_g: f64,
    feedback: Feedback,
) -> usize {
    let (h, k, d) = (horizon as f64, n_episodes as f64, d.max(1) as f64);
    let rate = match feedback {
        Feedback::FullInformation => l.sqrt(),
        Feedback::Bandit => l.sqrt() + l_theta.sqrt() / h.sqrt(),
    };
    let root_log = log_card_g.sqrt();
    if rate > (root_log - 1.0 / (h * d.sqrt())) / k {
        let w = (root_log / (rate + 1.0 / (h * k * d.sqrt()))).ceil();
        (w as usize).clamp(1, n_episodes)
    } else {
        n_episodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FullWindow,
    Restart { tau: usize },
    Oracle,
    StationaryGreedy,
}

pub fn run_baseline<R: Rng + ?Sized>(
    mdp: &NonstationaryMdp,
    class: &FunctionClass,
    kind: BaselineKind,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<RunResult> {
    match kind {
        BaselineKind::FullWindow => {
            let cfg = AgentConfig {
                window: Window::Full,
                ..*config
            };
            run_inner(mdp, class, &cfg, rng, "full_window")
        }
        BaselineKind::Restart { tau } => {
            if tau == 0 {
                return Err(Error::Config("restart period must be at least 1".into()));
            }
            let cfg = AgentConfig {
                restart: Some(tau),
                ..*config
            };
            run_inner(mdp, class, &cfg, rng, "restart")
        }
        BaselineKind::StationaryGreedy => {
            let cfg = AgentConfig {
                beta: BetaSpec::Value(f64::INFINITY),
                ..*config
            };
            run_inner(mdp, class, &cfg, rng, "stationary_greedy")
        }
        BaselineKind::Oracle => run_oracle(mdp, class, config, rng),
    }
}

fn run_oracle<R: Rng + ?Sized>(
    mdp: &NonstationaryMdp,
    class: &FunctionClass,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<RunResult> {
    let refs = reference(mdp, class)?;
    let mut cum = 0.0;
    let mut episodes = Vec::with_capacity(mdp.n_episodes());
    for k in 0..mdp.n_episodes() {
        let policy = mdp.optimal_values(k)?.greedy_policy();
        let trajectory = mdp.sample_episode(k, &policy, rng)?;
        let regret_increment = refs.v_star[k] - mdp.evaluate_policy(k, &policy)?;
        cum += regret_increment;
        episodes.push(EpisodeRecord {
            episode: k,
            chosen: refs.qstar_index[k],
            policy,
            trajectory,
            conf_set_size: class.len(),
            qstar_in_set: refs.qstar_index[k].is_some(),
            optimism_ok: None,
            regret_increment,
            cum_regret: cum,
        });
    }
    Ok(finish("oracle", config, 0.0, mdp.n_episodes(), episodes, class))
}
