//! Distributional Eluder dimension over Dirac point families, Bellman and
//! dynamic Bellman Eluder dimensions, and the universal gap.
//!
//! Independence uses the canonical threshold `eps' = max(eps, sqrt(energy))`,
//! where the energy of `g` is `sum_i (E_{mu_i} g)^2` over the prefix. A point
//! `nu` is independent of the prefix iff some `g` has `|E_nu g| > eps'`
//! strictly; this single check is equivalent to the existential over
//! `eps' >= eps`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_class::{backup, FunctionClass, Provenance, QFunction, DEDUP_TOL};
use crate::mdp::NonstationaryMdp;
use crate::table::QTable;

pub const DEFAULT_CAP: usize = 12;
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Dirac distribution on one state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointDistribution {
    pub state: usize,
    pub action: usize,
}

/// The family `{delta_(s,a)}` over all state-action pairs.
pub fn dirac_family(n_states: usize, n_actions: usize) -> Vec<PointDistribution> {
    (0..n_states)
        .flat_map(|state| (0..n_actions).map(move |action| PointDistribution { state, action }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualSource {
    pub member: usize,
    pub episode: usize,
    pub step: usize,
}

/// `f_h - T_h^k f_{h+1}` for one member, episode and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualFunction {
    pub values: QTable,
    pub provenance: ResidualSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceWitness {
    /// Index of the witnessing function.
    pub g: usize,
    pub eps_prime: f64,
    pub prefix_energy: f64,
    pub nu_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceElement {
    /// Index into the distribution family.
    pub point: usize,
    pub witness: IndependenceWitness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResult {
    pub value: usize,
    pub method: Method,
    /// Set when the exact search stopped at its length cap; `value` is then a lower bound.
    pub truncated: bool,
    pub witness_sequence: Vec<SequenceElement>,
}

impl DimensionResult {
    fn empty(method: Method) -> Self {
        Self {
            value: 0,
            method,
            truncated: false,
            witness_sequence: Vec::new(),
        }
    }

    /// Re-checks every element against its prefix.
    pub fn replay(&self, table: &ExpectationTable, eps: f64) -> bool {
        let points: Vec<usize> = self.witness_sequence.iter().map(|e| e.point).collect();
        self.witness_sequence.len() == self.value
            && self.witness_sequence.iter().enumerate().all(|(i, e)| {
                let w = e.witness;
                let energy: f64 = points[..i].iter().map(|&p| table.get(w.g, p).powi(2)).sum();
                let nu = table.get(w.g, e.point).abs();
                // the stored energy was summed by counts, so allow for rounding
                w.eps_prime >= eps
                    && energy <= w.eps_prime * w.eps_prime * (1.0 + 1e-12)
                    && nu > w.eps_prime
                    && table.witness(e.point, &points[..i], eps).is_some()
            })
    }
}

/// `E_{pi_p} g` for every function `g` and every point `p` of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationTable {
    n_funcs: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl ExpectationTable {
    pub fn from_residuals(g: &[ResidualFunction], pi: &[PointDistribution]) -> Self {
        let rows = g
            .iter()
            .map(|r| pi.iter().map(|d| r.values.get(d.state, d.action)).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// One row per function, one column per point.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_funcs = rows.len();
        let n_points = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_points), "ragged expectation table");
        Self {
            n_funcs,
            n_points,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n_funcs(&self) -> usize {
        self.n_funcs
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn get(&self, g: usize, p: usize) -> f64 {
        self.values[g * self.n_points + p]
    }

    fn energies_of_counts(&self, counts: &[u16]) -> Vec<f64> {
        (0..self.n_funcs)
            .map(|g| {
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(p, &c)| c as f64 * self.get(g, p).powi(2))
                    .sum()
            })
            .collect()
    }

    fn witness_from_energies(&self, nu: usize, energies: &[f64], eps: f64) -> Option<IndependenceWitness> {
        (0..self.n_funcs).find_map(|g| {
            let eps_prime = eps.max(energies[g].sqrt());
            let nu_value = self.get(g, nu).abs();
            (nu_value > eps_prime).then_some(IndependenceWitness {
                g,
                eps_prime,
                prefix_energy: energies[g],
                nu_value,
            })
        })
    }

    /// Lowest-index witness that `nu` is independent of `prefix`, if any.
    pub fn witness(&self, nu: usize, prefix: &[usize], eps: f64) -> Option<IndependenceWitness> {
        let mut counts = vec![0u16; self.n_points];
        for &p in prefix {
            counts[p] += 1;
        }
        self.witness_from_energies(nu, &self.energies_of_counts(&counts), eps)
    }
}

fn check_inputs(n_funcs: usize, eps: f64) -> Result<()> {
    if n_funcs == 0 {
        return Err(Error::EmptyResidualClass);
    }
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    Ok(())
}

pub fn is_eps_independent(
    nu: PointDistribution,
    prefix: &[PointDistribution],
    g: &[ResidualFunction],
    eps: f64,
) -> Result<Option<IndependenceWitness>> {
    check_inputs(g.len(), eps)?;
    let mut pi = vec![nu];
    pi.extend_from_slice(prefix);
    let table = ExpectationTable::from_residuals(g, &pi);
    let prefix_idx: Vec<usize> = (1..pi.len()).collect();
    Ok(table.witness(0, &prefix_idx, eps))
}

/// Search limits for the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_length: usize,
    pub node_budget: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_length: DEFAULT_CAP,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl SearchLimits {
    pub fn with_cap(cap: usize) -> Self {
        Self {
            max_length: cap,
            ..Self::default()
        }
    }
}

struct ExactSearch<'a> {
    table: &'a ExpectationTable,
    eps: f64,
    limits: SearchLimits,
    nodes: usize,
    truncated: bool,
    /// Prefix energies depend only on the multiset of chosen points, so the
    /// longest extension is memoized on the count vector.
    memo: HashMap<Vec<u16>, (usize, Option<SequenceElement>)>,
}

impl ExactSearch<'_> {
    fn longest(&mut self, counts: &mut Vec<u16>, depth: usize) -> Result<usize> {
        if let Some(&(len, _)) = self.memo.get(counts) {
            return Ok(len);
        }
        self.nodes += 1;
        if self.nodes > self.limits.node_budget {
            return Err(Error::SearchBudget(format!(
                "more than {} search nodes",
                self.limits.node_budget
            )));
        }
        let energies = self.table.energies_of_counts(counts);
        let mut best = (0, None);
        for p in 0..self.table.n_points() {
            let Some(witness) = self.table.witness_from_energies(p, &energies, self.eps) else {
                continue;
            };
            if depth == self.limits.max_length {
                self.truncated = true;
                break;
            }
            counts[p] += 1;
            let len = 1 + self.longest(counts, depth + 1)?;
            counts[p] -= 1;
            if len > best.0 {
                best = (len, Some(SequenceElement { point: p, witness }));
            }
        }
        self.memo.insert(counts.clone(), best);
        Ok(best.0)
    }
}

/// Exact DE dimension by exhaustive search over sequences (repeats allowed).
pub fn de_dimension_exact_table(
    table: &ExpectationTable,
    eps: f64,
    limits: SearchLimits,
) -> Result<DimensionResult> {
    check_inputs(table.n_funcs(), eps)?;
    let mut search = ExactSearch {
        table,
        eps,
        limits,
        nodes: 0,
        truncated: false,
        memo: HashMap::new(),
    };
    let mut counts = vec![0u16; table.n_points()];
    let value = search.longest(&mut counts, 0)?;
    let mut sequence = Vec::with_capacity(value);
    while let Some(&(_, Some(elem))) = search.memo.get(&counts) {
        sequence.push(elem);
        counts[elem.point] += 1;
    }
    debug_assert_eq!(sequence.len(), value);
    Ok(DimensionResult {
        value,
        method: Method::Exact,
        truncated: search.truncated,
        witness_sequence: sequence,
    })
}

pub fn de_dimension_exact(
    g: &[ResidualFunction],
    pi: &[PointDistribution],
    eps: f64,
    cap: usize,
) -> Result<DimensionResult> {
    check_inputs(g.len(), eps)?;
    de_dimension_exact_table(&ExpectationTable::from_residuals(g, pi), eps, SearchLimits::with_cap(cap))
}

fn greedy_pass<R: Rng + ?Sized>(
    table: &ExpectationTable,
    eps: f64,
    mut rng: Option<&mut R>,
) -> Vec<SequenceElement> {
    // each function witnesses each point at most once, which bounds the length
    let max_len = table.n_funcs() * table.n_points();
    let mut counts = vec![0u16; table.n_points()];
    let mut order: Vec<usize> = (0..table.n_points()).collect();
    let mut out = Vec::new();
    while out.len() < max_len {
        if let Some(r) = rng.as_deref_mut() {
            order.shuffle(r);
        }
        let energies = table.energies_of_counts(&counts);
        let next = order
            .iter()
            .find_map(|&p| table.witness_from_energies(p, &energies, eps).map(|w| (p, w)));
        let Some((point, witness)) = next else { break };
        counts[point] += 1;
        out.push(SequenceElement { point, witness });
    }
    out
}

/// Greedy lower bound: a first-found pass in index order, then one shuffled
/// pass; the longer sequence wins.
pub fn de_dimension_greedy_table(table: &ExpectationTable, eps: f64, seed: u64) -> Result<DimensionResult> {
    check_inputs(table.n_funcs(), eps)?;
    let mut best = greedy_pass::<ChaCha8Rng>(table, eps, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shuffled = greedy_pass(table, eps, Some(&mut rng));
    if shuffled.len() > best.len() {
        best = shuffled;
    }
    Ok(DimensionResult {
        value: best.len(),
        method: Method::Greedy,
        truncated: false,
        witness_sequence: best,
    })
}

pub fn de_dimension_greedy(
    g: &[ResidualFunction],
    pi: &[PointDistribution],
    eps: f64,
) -> Result<DimensionResult> {
    check_inputs(g.len(), eps)?;
    de_dimension_greedy_table(&ExpectationTable::from_residuals(g, pi), eps, 0)
}

fn dimension(
    g: &[ResidualFunction],
    pi: &[PointDistribution],
    eps: f64,
    method: Method,
    cap: usize,
) -> Result<DimensionResult> {
    check_inputs(g.len(), eps)?;
    if g.iter().all(|r| r.values.as_slice().iter().all(|&v| v == 0.0)) {
        return Ok(DimensionResult::empty(method));
    }
    match method {
        Method::Exact => de_dimension_exact(g, pi, eps, cap),
        Method::Greedy => de_dimension_greedy(g, pi, eps),
    }
}

fn push_residual(out: &mut Vec<ResidualFunction>, r: ResidualFunction, horizon: usize) -> Result<()> {
    let worst = r.values.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > horizon as f64 + 1e-9 {
        return Err(Error::ResidualBound(worst));
    }
    if !out.iter().any(|o| o.values.max_abs_diff(&r.values) <= DEDUP_TOL) {
        out.push(r);
    }
    Ok(())
}

fn residuals_for(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    h: usize,
    episodes: impl Iterator<Item = usize> + Clone,
) -> Result<Vec<ResidualFunction>> {
    mdp.check_step(h)?;
    let horizon = mdp.horizon();
    let mut out = Vec::new();
    for (member, f) in class.members.iter().enumerate() {
        for episode in episodes.clone() {
            let target = backup(mdp.episode(episode)?, h, f.next(h));
            let mut values = f.step(h).clone();
            for (v, t) in values.as_mut_slice().iter_mut().zip(target.as_slice()) {
                *v -= t;
            }
            let provenance = ResidualSource { member, episode, step: h };
            push_residual(&mut out, ResidualFunction { values, provenance }, horizon)?;
        }
    }
    Ok(out)
}

/// `{f_h - T_h^k f_{h+1} : f in F, k in [K]}`, deduplicated.
pub fn residual_class(class: &FunctionClass, mdp: &NonstationaryMdp, h: usize) -> Result<Vec<ResidualFunction>> {
    residuals_for(class, mdp, h, 0..mdp.n_episodes())
}

/// Residuals of a single episode's Bellman operator.
pub fn residual_class_episode(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    k: usize,
    h: usize,
) -> Result<Vec<ResidualFunction>> {
    mdp.episode(k)?;
    residuals_for(class, mdp, h, k..k + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDimensions {
    pub per_step: Vec<DimensionResult>,
    pub max: usize,
    pub truncated: bool,
}

impl StepDimensions {
    fn from_steps(per_step: Vec<DimensionResult>) -> Self {
        Self {
            max: per_step.iter().map(|r| r.value).max().unwrap_or(0),
            truncated: per_step.iter().any(|r| r.truncated),
            per_step,
        }
    }
}

/// Dynamic Bellman Eluder dimension against the Dirac family.
pub fn dbe_dimension(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    eps: f64,
    method: Method,
    cap: usize,
) -> Result<StepDimensions> {
    let pi = dirac_family(mdp.n_states(), mdp.n_actions());
    let per_step = (0..mdp.horizon())
        .map(|h| dimension(&residual_class(class, mdp, h)?, &pi, eps, method, cap))
        .collect::<Result<_>>()?;
    Ok(StepDimensions::from_steps(per_step))
}

/// Bellman Eluder dimension of episode `k` alone.
pub fn be_dimension(
    class: &FunctionClass,
    mdp: &NonstationaryMdp,
    k: usize,
    eps: f64,
    method: Method,
    cap: usize,
) -> Result<StepDimensions> {
    let pi = dirac_family(mdp.n_states(), mdp.n_actions());
    let per_step = (0..mdp.horizon())
        .map(|h| dimension(&residual_class_episode(class, mdp, k, h)?, &pi, eps, method, cap))
        .collect::<Result<_>>()?;
    Ok(StepDimensions::from_steps(per_step))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalGap {
    /// `+inf` when no independence witness exists.
    pub value: f64,
    pub truncated: bool,
}

/// Infimum of `|E_nu g| - eps'` over every witness `(g, nu)` following any
/// independent prefix of length below `cap`, with canonical `eps'`.
pub fn universal_gap_table(table: &ExpectationTable, eps: f64, limits: SearchLimits) -> Result<UniversalGap> {
    check_inputs(table.n_funcs(), eps)?;
    let mut seen: HashMap<Vec<u16>, ()> = HashMap::new();
    let mut stack = vec![(vec![0u16; table.n_points()], 0usize)];
    let mut gap = f64::INFINITY;
    let mut truncated = false;
    while let Some((counts, depth)) = stack.pop() {
        if seen.insert(counts.clone(), ()).is_some() {
            continue;
        }
        if seen.len() > limits.node_budget {
            return Err(Error::SearchBudget(format!("more than {} prefixes", limits.node_budget)));
        }
        let energies = table.energies_of_counts(&counts);
        for p in 0..table.n_points() {
            let mut independent = false;
            for g in 0..table.n_funcs() {
                let eps_prime = eps.max(energies[g].sqrt());
                let v = table.get(g, p).abs();
                if v > eps_prime {
                    independent = true;
                    gap = gap.min(v - eps_prime);
                }
            }
            if independent {
                if depth + 1 >= limits.max_length {
                    truncated = true;
                    continue;
                }
                let mut next = counts.clone();
                next[p] += 1;
                stack.push((next, depth + 1));
            }
        }
    }
    Ok(UniversalGap { value: gap, truncated })
}

pub fn universal_gap(
    g: &[ResidualFunction],
    pi: &[PointDistribution],
    eps: f64,
    cap: usize,
) -> Result<UniversalGap> {
    check_inputs(g.len(), eps)?;
    universal_gap_table(&ExpectationTable::from_residuals(g, pi), eps, SearchLimits::with_cap(cap))
}

/// A finite linear-feature benchmark: points `phi(s, a)` in the unit ball of
/// `R^d`, member weights `w_h`, and per-episode backup weights `w~_h^k`, so
/// every residual is `phi^T (w_h - w~_h^k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBench {
    pub dim: usize,
    pub horizon: usize,
    pub n_episodes: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// `features[s * n_actions + a]`.
    pub features: Vec<Vec<f64>>,
    /// `weights[member][h]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `backup_weights[member][k][h]`.
    pub backup_weights: Vec<Vec<Vec<Vec<f64>>>>,
    pub class: FunctionClass,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    let n = norm(&v);
    let r = radius * rng.gen::<f64>();
    if n == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / n * r).collect()
}

fn clip_norm(v: &mut [f64], radius: f64) {
    let n = norm(v);
    if n > radius {
        v.iter_mut().for_each(|x| *x *= radius / n);
    }
}

fn linear_table(features: &[Vec<f64>], n_states: usize, n_actions: usize, w: &[f64]) -> QTable {
    QTable::from_flat(
        n_states,
        n_actions,
        features.iter().map(|phi| phi.iter().zip(w).map(|(a, b)| a * b).sum()).collect(),
    )
}

impl LinearBench {
    pub fn weight_bound(&self) -> f64 {
        2.0 * self.horizon as f64 * (self.dim as f64).sqrt()
    }

    pub fn points(&self) -> Vec<PointDistribution> {
        dirac_family(self.n_states, self.n_actions)
    }

    /// Residuals at step `h` over all members and episodes, deduplicated.
    pub fn residuals(&self, h: usize) -> Vec<ResidualFunction> {
        let mut out: Vec<ResidualFunction> = Vec::new();
        for (member, ws) in self.weights.iter().enumerate() {
            for episode in 0..self.n_episodes {
                let diff: Vec<f64> = ws[h]
                    .iter()
                    .zip(&self.backup_weights[member][episode][h])
                    .map(|(a, b)| a - b)
                    .collect();
                let values = linear_table(&self.features, self.n_states, self.n_actions, &diff);
                if !out.iter().any(|o| o.values.max_abs_diff(&values) <= DEDUP_TOL) {
                    out.push(ResidualFunction {
                        values,
                        provenance: ResidualSource { member, episode, step: h },
                    });
                }
            }
        }
        out
    }

    /// Greedy (or exact) DBE dimension of the benchmark against the Dirac family.
    pub fn dbe_dimension(&self, eps: f64, method: Method, cap: usize) -> Result<StepDimensions> {
        let pi = self.points();
        let per_step = (0..self.horizon)
            .map(|h| dimension(&self.residuals(h), &pi, eps, method, cap))
            .collect::<Result<_>>()?;
        Ok(StepDimensions::from_steps(per_step))
    }
}

/// The envelope `4 [1 + d log(zeta^2 / eps^2 + 1)]` with `zeta = 4 H sqrt(d)`.
pub fn linear_dbe_envelope(d: usize, horizon: usize, eps: f64) -> f64 {
    let zeta_sq = 16.0 * (horizon * horizon * d) as f64;
    4.0 * (1.0 + d as f64 * (zeta_sq / (eps * eps) + 1.0).ln())
}

/// Builds a [`LinearBench`]. Features include the `d` basis vectors (so they
/// span `R^d`) plus random points of the unit ball; weights have norm at most
/// `2 H sqrt(d)`. Backup weights drift by `drift_scale` per episode.
pub fn linear_class_generator<R: Rng + ?Sized>(
    d: usize,
    horizon: usize,
    n_episodes: usize,
    n_members: usize,
    drift_scale: f64,
    rng: &mut R,
) -> Result<LinearBench> {
    if d == 0 || horizon == 0 || n_episodes == 0 || n_members == 0 {
        return Err(Error::Config("linear benchmark needs positive d, H, K and member count".into()));
    }
    let n_actions = 2;
    let n_states = d + 1;
    let mut features: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    while features.len() < n_states * n_actions {
        features.push(random_in_ball(d, 1.0, rng));
    }
    let bound = 2.0 * horizon as f64 * (d as f64).sqrt();
    let weights: Vec<Vec<Vec<f64>>> = (0..n_members)
        .map(|_| (0..horizon).map(|_| random_in_ball(d, bound, rng)).collect())
        .collect();
    let backup_weights = (0..n_members)
        .map(|_| {
            let base: Vec<Vec<f64>> = (0..horizon).map(|_| random_in_ball(d, bound, rng)).collect();
            let mut current = base;
            (0..n_episodes)
                .map(|k| {
                    if k > 0 && drift_scale > 0.0 {
                        for w in current.iter_mut() {
                            let step = random_in_ball(d, drift_scale, rng);
                            w.iter_mut().zip(step).for_each(|(x, s)| *x += s);
                            clip_norm(w, bound);
                        }
                    }
                    current.clone()
                })
                .collect()
        })
        .collect();
    let members = weights
        .iter()
        .map(|ws| {
            QFunction::new(ws.iter().map(|w| linear_table(&features, n_states, n_actions, w)).collect())
        })
        .collect();
    let class = FunctionClass::new(
        members,
        Vec::new(),
        Provenance {
            source: "linear".into(),
            perturb_scale: drift_scale,
            ..Provenance::default()
        },
    )?;
    Ok(LinearBench {
        dim: d,
        horizon,
        n_episodes,
        n_states,
        n_actions,
        features,
        weights,
        backup_weights,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n_points: usize, c: f64) -> Vec<f64> {
        vec![c; n_points]
    }

    fn residual(rows: &[Vec<f64>]) -> ResidualFunction {
        ResidualFunction {
            values: QTable::from_rows(rows),
            provenance: ResidualSource { member: 0, episode: 0, step: 0 },
        }
    }

    const X: PointDistribution = PointDistribution { state: 0, action: 0 };
    const Y: PointDistribution = PointDistribution { state: 0, action: 1 };

    #[test]
    fn one_is_independent_of_empty_prefix() {
        let g = [residual(&[vec![1.0, 1.0]])];
        let w = is_eps_independent(X, &[], &g, 0.5).unwrap().unwrap();
        assert_eq!(w.eps_prime, 0.5);
        assert_eq!(w.nu_value, 1.0);
        assert_eq!(w.prefix_energy, 0.0);
    }

    #[test]
    fn one_is_dependent_after_one_point() {
        let g = [residual(&[vec![1.0, 1.0]])];
        assert!(is_eps_independent(Y, &[X], &g, 0.5).unwrap().is_none());
        assert!(is_eps_independent(X, &[X], &g, 0.5).unwrap().is_none());
    }

    #[test]
    fn zero_is_never_independent() {
        let g = [residual(&[vec![0.0, 0.0]])];
        assert!(is_eps_independent(X, &[], &g, 0.1).unwrap().is_none());
        let r = de_dimension_exact(&g, &[X, Y], 0.1, 12).unwrap();
        assert_eq!(r.value, 0);
        assert_eq!(de_dimension_greedy(&g, &[X, Y], 0.1).unwrap().value, 0);
    }

    #[test]
    fn rejects_empty_class_and_bad_eps() {
        assert!(matches!(is_eps_independent(X, &[], &[], 0.5), Err(Error::EmptyResidualClass)));
        let g = [residual(&[vec![1.0, 1.0]])];
        assert!(matches!(is_eps_independent(X, &[], &g, 0.0), Err(Error::NonPositiveEpsilon(_))));
    }

    #[test]
    fn constant_one_has_dimension_one() {
        let g = [residual(&[vec![1.0, 1.0]])];
        let r = de_dimension_exact(&g, &[X, Y], 0.5, 12).unwrap();
        assert_eq!(r.value, 1);
        assert!(!r.truncated);
        assert_eq!(de_dimension_exact(&g, &[X], 0.5, 12).unwrap().value, 1);
    }

    #[test]
    fn indicator_functions_give_one_per_point() {
        // g_i = indicator of point i: each point needs its own function
        let table = ExpectationTable::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let r = de_dimension_exact_table(&table, 0.5, SearchLimits::default()).unwrap();
        assert_eq!(r.value, 3);
        assert!(r.replay(&table, 0.5));
    }

    #[test]
    fn cap_is_reported() {
        let table = ExpectationTable::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let r = de_dimension_exact_table(&table, 0.5, SearchLimits::with_cap(2)).unwrap();
        assert_eq!(r.value, 2);
        assert!(r.truncated);
    }

    #[test]
    fn node_budget_is_an_error() {
        let table = ExpectationTable::from_rows(vec![constant(3, 1.0), vec![1.0, -1.0, 0.5]]);
        let limits = SearchLimits {
            max_length: 12,
            node_budget: 1,
        };
        assert!(matches!(de_dimension_exact_table(&table, 0.1, limits), Err(Error::SearchBudget(_))));
    }

    #[test]
    fn universal_gap_examples() {
        let one = ExpectationTable::from_rows(vec![vec![1.0]]);
        let gap = universal_gap_table(&one, 0.5, SearchLimits::default()).unwrap();
        assert_eq!(gap.value, 0.5);
        let zero = ExpectationTable::from_rows(vec![vec![0.0, 0.0]]);
        assert_eq!(universal_gap_table(&zero, 0.5, SearchLimits::default()).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn linear_envelope_value() {
        let expected = 4.0 * (1.0 + (16.0f64 * 4.0 / 0.25 + 1.0).ln());
        assert!((linear_dbe_envelope(1, 2, 0.5) - expected).abs() < 1e-12);
    }
}
