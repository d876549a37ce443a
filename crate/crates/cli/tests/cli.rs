use std::path::Path;
use std::process::{Command, Output};

fn nsrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsrl"))
        .args(args)
        .env_remove("NSRL_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, output_dir: &str) -> std::path::PathBuf {
    let config = serde_json::json!({
        "schema_version": 1,
        "environment": {
            "source": "drift",
            "base": {"kind": "gridlet3"},
            "drift": {"kind": "abrupt", "switch_episode": 10, "target": {"kind": "gridlet3_swapped"}},
            "n_episodes": 20
        },
        "function_class": {"source": "realizable", "n_distractors": 4, "perturb_scale": 0.5},
        "agents": [
            {"name": "sw", "algorithm": "sw_opea", "window": {"fixed": 5}, "beta": {"value": 1.0}},
            {"name": "oracle", "algorithm": "oracle", "window": "full", "beta": {"value": 0.0}}
        ],
        "seeds": [0, 1],
        "output_dir": output_dir
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn verify_passes_and_prints_reports() {
    let out = nsrl(&["verify", "--suite", "lemma54", "--trials", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["suite"], "lemma54");
    assert_eq!(reports[0]["passed"], true);
}

#[test]
fn unknown_suite_is_an_error() {
    let out = nsrl(&["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn budgets_reports_variation_of_an_mdp_file() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = nsrl::drift::make_abrupt(
        &nsrl::instances::gridlet3_with(0.9),
        &nsrl::instances::gridlet3_swapped(0.6),
        3,
        6,
    )
    .unwrap();
    let path = dir.path().join("mdp.json");
    mdp.save(&path).unwrap();
    let out = nsrl(&["budgets", path.to_str().unwrap(), "--w", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let budgets = mdp.variation_budgets();
    assert!((v["delta_p"].as_f64().unwrap() - budgets.delta_p).abs() < 1e-12);
    assert_eq!(v["n_episodes"], 6);
    assert!(v["max_local_delta_p"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_honours_the_output_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "ignored");
    let target = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_nsrl"))
        .args(["run", config.to_str().unwrap()])
        .env("NSRL_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("summary.json").exists());
    assert!(target.join("runs/sw__seed1.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn sweep_needs_two_windows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), dir.path().join("out").to_str().unwrap());
    let out = nsrl(&["sweep-window", config.to_str().unwrap(), "--ws", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let out = nsrl(&["sweep-window", config.to_str().unwrap(), "--ws", "2,20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("window,median_regret,n_failed"));
}
