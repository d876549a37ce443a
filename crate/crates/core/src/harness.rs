//! Configuration-driven experiments: environment and class construction,
//! parallel fan-out over agents and seeds, persisted per-run artifacts and a
//! summary with robust aggregates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{
    choose_window, run_baseline, run_swopea, AgentConfig, BaselineKind, BetaSpec, Feedback, RunResult,
    VariationOracle, Window,
};
use crate::drift::{build_drift, DriftSpec};
use crate::error::{Error, Result};
use crate::func_class::{build_realizable_class, FunctionClass};
use crate::instances::{gridlet3_swapped, gridlet3_with, random_snapshot, SnapshotSpec};
use crate::mdp::{MdpSnapshot, NonstationaryMdp};

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides the configured output directory when set.
pub const OUTPUT_DIR_ENV: &str = "NSRL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// A serialized non-stationary MDP.
    File { path: PathBuf },
    /// A base snapshot evolved by a drift generator over `n_episodes`.
    Drift {
        base: SnapshotSpec,
        drift: DriftSpec,
        n_episodes: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ClassSpec {
    Realizable {
        n_distractors: usize,
        perturb_scale: f64,
        #[serde(default = "yes")]
        closure: bool,
        #[serde(default)]
        seed: u64,
    },
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    SwOpea,
    FullWindow,
    Restart { tau: usize },
    Oracle,
    StationaryGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    Full,
    Fixed(usize),
    /// The corollary window computed from the environment's average
    /// variation, `log |G|` and the dimension `d`.
    Corollary { d: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub algorithm: AlgorithmKind,
    pub window: WindowPolicy,
    pub beta: BetaSpec,
    #[serde(default = "full_information")]
    pub feedback: Feedback,
    #[serde(default = "exact_oracle")]
    pub variation_oracle: VariationOracle,
}

fn full_information() -> Feedback {
    Feedback::FullInformation
}

fn exact_oracle() -> VariationOracle {
    VariationOracle::ExactFromEnv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub environment: EnvironmentSpec,
    pub function_class: ClassSpec,
    pub agents: Vec<AgentSpec>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        // relative paths inside the config resolve against its directory
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        config.validate()?;
        Ok(config)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let EnvironmentSpec::File { path } = &mut self.environment {
            fix(path);
        }
        if let ClassSpec::File { path } = &mut self.function_class {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut names: Vec<&str> = self.agents.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("agent names must be unique".into()));
        }
        if let Some(bad) = self
            .agents
            .iter()
            .find(|a| a.name.is_empty() || !a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(Error::Config(format!("agent name {:?} is not a plain identifier", bad.name)));
        }
        for path in self.referenced_paths() {
            if !path.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn referenced_paths(&self) -> Vec<&Path> {
        let mut out = Vec::new();
        if let EnvironmentSpec::File { path } = &self.environment {
            out.push(path.as_path());
        }
        if let ClassSpec::File { path } = &self.function_class {
            out.push(path.as_path());
        }
        if let EnvironmentSpec::Drift { base, drift, .. } = &self.environment {
            if let SnapshotSpec::File { path } = base {
                out.push(Path::new(path));
            }
            match drift {
                DriftSpec::Abrupt { target, .. } | DriftSpec::Gradual { target } | DriftSpec::RewardOnly { target } => {
                    if let SnapshotSpec::File { path } = target {
                        out.push(Path::new(path));
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// The effective output directory, honouring the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| self.output_dir.clone(), PathBuf::from)
    }
}

/// Resolves a named snapshot; `File` sources must hold a single-episode MDP
/// document (its first episode is used).
pub fn resolve_snapshot(spec: &SnapshotSpec) -> Result<MdpSnapshot> {
    match spec {
        SnapshotSpec::Chain2 { horizon } => Ok(crate::instances::chain2(*horizon)),
        SnapshotSpec::Gridlet3 { p_move } => Ok(gridlet3_with(*p_move)),
        SnapshotSpec::Gridlet3Swapped { p_move } => Ok(gridlet3_swapped(*p_move)),
        SnapshotSpec::Random {
            n_states,
            n_actions,
            horizon,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(random_snapshot(*n_states, *n_actions, *horizon, &mut rng))
        }
        SnapshotSpec::File { path } => Ok(NonstationaryMdp::load(path)?.episodes()[0].clone()),
    }
}

pub fn build_environment(spec: &EnvironmentSpec) -> Result<NonstationaryMdp> {
    let mdp = match spec {
        EnvironmentSpec::File { path } => NonstationaryMdp::load(path)?,
        EnvironmentSpec::Drift {
            base,
            drift,
            n_episodes,
            seed,
        } => {
            let base = resolve_snapshot(base)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            build_drift(&base, *n_episodes, drift, resolve_snapshot, &mut rng)?
        }
    };
    let report = mdp.validate();
    if !report.is_ok() {
        return Err(Error::InvalidMdp(report));
    }
    Ok(mdp)
}

pub fn build_class(spec: &ClassSpec, mdp: &NonstationaryMdp) -> Result<FunctionClass> {
    match spec {
        ClassSpec::Realizable {
            n_distractors,
            perturb_scale,
            closure,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            build_realizable_class(mdp, *n_distractors, *perturb_scale, *closure, &mut rng)
        }
        ClassSpec::File { path } => FunctionClass::load(path),
    }
}

/// Stream seed of one run: SHA-256 of `(master_seed, seed)`. Agents do not
/// enter the derivation, so adding agents never changes existing streams and
/// all agents sharing a seed see common random numbers.
pub fn derive_run_seed(master_seed: u64, seed: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Resolves an agent spec against a concrete environment and class.
pub fn agent_config(spec: &AgentSpec, mdp: &NonstationaryMdp, class: &FunctionClass) -> AgentConfig {
    let window = match spec.window {
        WindowPolicy::Full => Window::Full,
        WindowPolicy::Fixed(w) => Window::Fixed(w),
        WindowPolicy::Corollary { d } => {
            let avg = mdp.average_variation();
            Window::Fixed(choose_window(
                avg.l,
                avg.l_theta,
                mdp.horizon(),
                mdp.n_episodes(),
                d,
                (class.aux_members.len() as f64).ln(),
                spec.feedback,
            ))
        }
    };
    AgentConfig {
        window,
        beta: spec.beta,
        feedback: spec.feedback,
        variation_oracle: spec.variation_oracle,
        restart: None,
    }
}

pub fn run_agent(
    spec: &AgentSpec,
    mdp: &NonstationaryMdp,
    class: &FunctionClass,
    run_seed: u64,
) -> Result<RunResult> {
    let config = agent_config(spec, mdp, class);
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let mut result = match spec.algorithm {
        AlgorithmKind::SwOpea => run_swopea(mdp, class, &config, &mut rng),
        AlgorithmKind::FullWindow => run_baseline(mdp, class, BaselineKind::FullWindow, &config, &mut rng),
        AlgorithmKind::Restart { tau } => run_baseline(mdp, class, BaselineKind::Restart { tau }, &config, &mut rng),
        AlgorithmKind::Oracle => run_baseline(mdp, class, BaselineKind::Oracle, &config, &mut rng),
        AlgorithmKind::StationaryGreedy => {
            run_baseline(mdp, class, BaselineKind::StationaryGreedy, &config, &mut rng)
        }
    }?;
    result.seed = Some(run_seed);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub agent: String,
    pub seed: u64,
    pub run_seed: u64,
    pub final_regret: Option<f64>,
    pub curve_path: Option<String>,
    pub result_path: Option<String>,
    pub qstar_always_in_set: Option<bool>,
    pub mean_conf_set_size: Option<f64>,
    pub window: Option<usize>,
    pub beta: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAggregate {
    pub agent: String,
    pub n_runs: usize,
    pub n_failed: usize,
    pub median_regret: f64,
    pub q1_regret: f64,
    pub q3_regret: f64,
    pub iqr_regret: f64,
    /// Fraction of successful runs with `Q*_k ∈ B^k` for all `k`.
    pub qstar_event_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub schema_version: u32,
    pub n_episodes: usize,
    pub class_size: usize,
    pub aux_size: usize,
    pub runs: Vec<RunSummary>,
    pub aggregates: Vec<AgentAggregate>,
    /// SHA-256 over every per-run artifact, in run order.
    pub artifacts_sha256: String,
}

impl SummaryRecord {
    pub fn aggregate(&self, agent: &str) -> Option<&AgentAggregate> {
        self.aggregates.iter().find(|a| a.agent == agent)
    }

    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn aggregate(agent: &str, runs: &[RunSummary]) -> AgentAggregate {
    let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.agent == agent).collect();
    let mut regrets: Vec<f64> = mine.iter().filter_map(|r| r.final_regret).collect();
    regrets.sort_by(f64::total_cmp);
    let ok = regrets.len();
    let events = mine.iter().filter(|r| r.qstar_always_in_set == Some(true)).count();
    let (q1, q3) = (quantile(&regrets, 0.25), quantile(&regrets, 0.75));
    AgentAggregate {
        agent: agent.to_string(),
        n_runs: mine.len(),
        n_failed: mine.len() - ok,
        median_regret: quantile(&regrets, 0.5),
        q1_regret: q1,
        q3_regret: q3,
        iqr_regret: q3 - q1,
        qstar_event_rate: if ok == 0 { 0.0 } else { events as f64 / ok as f64 },
    }
}

/// Regret curve as CSV: `episode,regret_increment,cum_regret,conf_set_size,qstar_in_set`.
pub fn curve_csv(result: &RunResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "regret_increment", "cum_regret", "conf_set_size", "qstar_in_set"])?;
    for e in &result.episodes {
        w.write_record([
            e.episode.to_string(),
            e.regret_increment.to_string(),
            e.cum_regret.to_string(),
            e.conf_set_size.to_string(),
            e.qstar_in_set.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads back the cumulative-regret column of a curve CSV.
pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let v: f64 = row
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad cum_regret in {}", path.display())))?;
        out.push(v);
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

struct Built {
    mdp: NonstationaryMdp,
    class: FunctionClass,
}

fn build(config: &ExperimentConfig) -> Result<Built> {
    let mdp = build_environment(&config.environment)?;
    let class = build_class(&config.function_class, &mdp)?;
    if class.horizon() != mdp.horizon() {
        return Err(Error::Config("class horizon differs from the environment".into()));
    }
    Ok(Built { mdp, class })
}

fn execute(config: &ExperimentConfig, built: &Built, agents: &[AgentSpec], out_dir: &Path) -> Result<SummaryRecord> {
    let runs_dir = out_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let jobs: Vec<(&AgentSpec, u64)> = agents
        .iter()
        .flat_map(|a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    info!("running {} jobs", jobs.len());
    let outcomes: Vec<(RunSummary, Option<(String, String)>)> = jobs
        .par_iter()
        .map(|&(agent, seed)| {
            let run_seed = derive_run_seed(config.master_seed, seed);
            let mut summary = RunSummary {
                agent: agent.name.clone(),
                seed,
                run_seed,
                final_regret: None,
                curve_path: None,
                result_path: None,
                qstar_always_in_set: None,
                mean_conf_set_size: None,
                window: None,
                beta: None,
                error: None,
            };
            let outcome = run_agent(agent, &built.mdp, &built.class, run_seed).and_then(|result| {
                let stem = format!("{}__seed{}", agent.name, seed);
                let json = serde_json::to_string(&result)?;
                let csv = curve_csv(&result)?;
                write_file(&runs_dir.join(format!("{stem}.json")), &json)?;
                write_file(&runs_dir.join(format!("{stem}.csv")), &csv)?;
                summary.final_regret = Some(result.total_regret);
                summary.curve_path = Some(format!("runs/{stem}.csv"));
                summary.result_path = Some(format!("runs/{stem}.json"));
                summary.qstar_always_in_set = Some(result.qstar_always_in_set);
                summary.mean_conf_set_size = Some(result.mean_conf_set_size());
                summary.window = Some(result.window);
                summary.beta = Some(result.beta);
                Ok((json, csv))
            });
            match outcome {
                Ok(artifacts) => (summary, Some(artifacts)),
                Err(e) => {
                    warn!("run {} seed {seed} failed: {e}", agent.name);
                    summary.error = Some(e.to_string());
                    (summary, None)
                }
            }
        })
        .collect();
    let mut hasher = Sha256::new();
    let mut runs = Vec::with_capacity(outcomes.len());
    for (summary, artifacts) in outcomes {
        if let Some((json, csv)) = artifacts {
            hasher.update(json.as_bytes());
            hasher.update(csv.as_bytes());
        }
        runs.push(summary);
    }
    let aggregates = agents.iter().map(|a| aggregate(&a.name, &runs)).collect();
    let mut digest = String::new();
    for b in hasher.finalize() {
        let _ = write!(digest, "{b:02x}");
    }
    Ok(SummaryRecord {
        schema_version: SCHEMA_VERSION,
        n_episodes: built.mdp.n_episodes(),
        class_size: built.class.len(),
        aux_size: built.class.aux_members.len(),
        runs,
        aggregates,
        artifacts_sha256: digest,
    })
}

/// Runs every `(agent, seed)` pair, writes `runs/*.json`, `runs/*.csv` and
/// `summary.json` under the output directory. Individual run failures are
/// recorded in the summary; only setup errors abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SummaryRecord> {
    config.validate()?;
    let built = build(config)?;
    let out_dir = config.output_dir();
    let summary = execute(config, &built, &config.agents, &out_dir)?;
    write_file(&out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub median_regret: f64,
    pub n_failed: usize,
}

/// Runs the first agent of the config with each fixed window, across all
/// seeds, and writes `window_sweep.csv`.
pub fn sweep_window(config: &ExperimentConfig, windows: &[usize]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if windows.len() < 2 {
        return Err(Error::Config("a window sweep needs at least two window values".into()));
    }
    if windows.contains(&0) {
        return Err(Error::Config("window sizes must be at least 1".into()));
    }
    let built = build(config)?;
    let template = &config.agents[0];
    let out_dir = config.output_dir();
    let mut rows = Vec::with_capacity(windows.len());
    for &w in windows {
        let agent = AgentSpec {
            name: format!("{}_w{w}", template.name),
            algorithm: AlgorithmKind::SwOpea,
            window: WindowPolicy::Fixed(w),
            ..template.clone()
        };
        let summary = execute(config, &built, std::slice::from_ref(&agent), &out_dir.join(format!("sweep_w{w}")))?;
        let agg = &summary.aggregates[0];
        rows.push(SweepRow {
            window: w,
            median_regret: agg.median_regret,
            n_failed: agg.n_failed,
        });
    }
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut w = csv::Writer::from_path(out_dir.join("window_sweep.csv"))?;
    w.write_record(["window", "median_regret", "n_failed"])?;
    for r in &rows {
        w.write_record([r.window.to_string(), r.median_regret.to_string(), r.n_failed.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out_dir.join("window_sweep.csv"), e))?;
    Ok(rows)
}
