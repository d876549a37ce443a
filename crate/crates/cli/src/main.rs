use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nsrl::eluder::{dbe_dimension, Method, DEFAULT_CAP};
use nsrl::func_class::FunctionClass;
use nsrl::harness::{run_experiment, sweep_window, ExperimentConfig, OUTPUT_DIR_ENV};
use nsrl::verify::{verify, Suite, SuiteReport};
use nsrl::NonstationaryMdp;

const EXIT_RUN_ERROR: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "nsrl", version, about = "Sliding-window optimistic RL experiments on drifting tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (agent, seed) pair of an experiment config.
    Run {
        config: PathBuf,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Run a randomized lemma check (or `all`).
    Verify {
        #[arg(long)]
        suite: String,
        /// Defaults to the suite's standard trial count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dynamic Bellman Eluder dimension of a class on an MDP.
    Eluder {
        class: PathBuf,
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
        method: MethodArg,
        /// Length cap of the exact search.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Median regret of SW-OPEA for each window size.
    SweepWindow {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ws: Vec<usize>,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Variation budgets and average variation of an MDP file.
    Budgets {
        mdp: PathBuf,
        /// Also report the worst local variation for this window.
        #[arg(long)]
        w: Option<usize>,
    },
}

fn load_config(path: &PathBuf, output_dir: Option<PathBuf>) -> nsrl::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) -> nsrl::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(command: Command) -> nsrl::Result<ExitCode> {
    match command {
        Command::Run { config, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let summary = run_experiment(&config)?;
            for agg in &summary.aggregates {
                println!(
                    "{}: median regret {:.4} (IQR {:.4}), {} runs, {} failed",
                    agg.agent, agg.median_regret, agg.iqr_regret, agg.n_runs, agg.n_failed
                );
            }
            println!("summary: {}", config.output_dir().join("summary.json").display());
            Ok(if summary.any_failed() {
                ExitCode::from(EXIT_RUN_ERROR)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Verify { suite, trials, seed } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse().map_err(nsrl::Error::Config)?]
            };
            let reports: Vec<SuiteReport> = suites
                .into_iter()
                .map(|s| verify(s, trials.unwrap_or_else(|| s.default_trials()), seed))
                .collect::<nsrl::Result<_>>()?;
            print_json(&reports)?;
            Ok(if reports.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            })
        }
        Command::Eluder {
            class,
            mdp,
            eps,
            method,
            cap,
        } => {
            let class = FunctionClass::load(class)?;
            let mdp = NonstationaryMdp::load(mdp)?;
            let method = match method {
                MethodArg::Exact => Method::Exact,
                MethodArg::Greedy => Method::Greedy,
            };
            print_json(&dbe_dimension(&class, &mdp, eps, method, cap)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepWindow { config, ws, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let rows = sweep_window(&config, &ws)?;
            println!("window,median_regret,n_failed");
            for r in &rows {
                println!("{},{},{}", r.window, r.median_regret, r.n_failed);
            }
            Ok(if rows.iter().any(|r| r.n_failed > 0) {
                ExitCode::from(EXIT_RUN_ERROR)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Budgets { mdp, w } => {
            let mdp = NonstationaryMdp::load(mdp)?;
            let budgets = mdp.variation_budgets();
            let avg = mdp.average_variation();
            let mut out = serde_json::json!({
                "n_episodes": mdp.n_episodes(),
                "horizon": mdp.horizon(),
                "delta_r": budgets.delta_r,
                "delta_p": budgets.delta_p,
                "l": avg.l,
                "l_theta": avg.l_theta,
            });
            if let Some(w) = w {
                let (mut worst_p, mut worst_r) = (0.0f64, 0.0f64);
                for k in 0..mdp.n_episodes() {
                    for h in 0..mdp.horizon() {
                        let lv = mdp.local_variation(k, h, w)?;
                        worst_p = worst_p.max(lv.delta_p);
                        worst_r = worst_r.max(lv.delta_r);
                    }
                }
                out["w"] = w.into();
                out["max_local_delta_p"] = worst_p.into();
                out["max_local_delta_r"] = worst_r.into();
            }
            print_json(&out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN_ERROR)
        }
    }
}
