use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adastack_harness::eval::EVAL_HEADER;
use adastack_harness::run::{read_metrics, CSV_SCHEMA_VERSION, METRICS_HEADER};
use adastack_harness::sweep::{AGGREGATE_HEADER, FAILURES_HEADER, SUMMARY_HEADER};

fn adastack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adastack")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout_first_line(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().next().unwrap())
}

fn error_line(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

const TRAIN: [&str; 16] = [
    "train",
    "--env",
    "passive_tmaze",
    "--length",
    "2",
    "--mode",
    "continual",
    "--agent",
    "q",
    "--memory",
    "as",
    "--k",
    "2",
    "--total-steps",
    "20000",
    "--output=runs",
];

#[test]
fn train_writes_one_csv_per_seed_at_the_logging_cadence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join(stdout_first_line(&adastack(&TRAIN, tmp.path())));
    for seed in 0..5 {
        let recs = read_metrics(&dir.join(format!("seed_{seed}.csv"))).unwrap();
        let steps: BTreeSet<u64> = recs.iter().map(|r| r.step).collect();
        assert_eq!(steps.len(), 20_000 / 100, "seed {seed}");
        assert!(recs.iter().all(|r| r.seed == seed));
        assert!(dir.join(format!("seed_{seed}.qtable.json")).exists());
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["csv_schema"], CSV_SCHEMA_VERSION);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_clock_secs"].as_f64().is_some());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join(stdout_first_line(&adastack(&TRAIN, tmp.path())));
    let first: Vec<Vec<u8>> = (0..5).map(|s| std::fs::read(dir.join(format!("seed_{s}.csv"))).unwrap()).collect();
    adastack(&TRAIN, tmp.path());
    let second: Vec<Vec<u8>> = (0..5).map(|s| std::fs::read(dir.join(format!("seed_{s}.csv"))).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn invalid_configs_exit_nonzero_with_a_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = TRAIN.to_vec();
    args[12] = "0";
    let e = error_line(&adastack(&args, tmp.path()));
    assert_eq!(e["error"]["kind"], "invalid_config");
    assert!(e["error"]["message"].as_str().unwrap().contains('k'));
    assert!(!tmp.path().join("runs").exists(), "nothing written before validation");

    std::fs::write(tmp.path().join("bad.toml"), "agent = \"q\"\n").unwrap();
    let e = error_line(&adastack(&["train", "bad.toml"], tmp.path()));
    assert_eq!(e["error"]["kind"], "parse");
    let e = error_line(&adastack(&["train", "missing.toml"], tmp.path()));
    assert_eq!(e["error"]["kind"], "io");
}

#[test]
fn csv_headers_match_the_golden_file() {
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/headers.txt")).unwrap();
    let current = format!(
        "schema {CSV_SCHEMA_VERSION}\nmetrics {}\naggregate {}\nsummary {}\nfailures {}\neval {}\n",
        METRICS_HEADER.join(","),
        AGGREGATE_HEADER.join(","),
        SUMMARY_HEADER.join(","),
        FAILURES_HEADER.join(","),
        EVAL_HEADER.join(",")
    );
    assert_eq!(current, golden, "CSV layout changed: bump CSV_SCHEMA_VERSION and update the golden file");

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join(stdout_first_line(&adastack(&TRAIN, tmp.path())));
    let text = std::fs::read_to_string(dir.join("seed_0.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
    assert!(!text.contains('\r'));
}

const SWEEP: &str = r#"
name = "grid"

[base]
agent = "q"
memory_mode = "as"
k = 2
seeds = [0, 1, 2]
total_steps = 3000
output = "out"

[base.env]
name = "passive_tmaze"
length = 0
mode = "continual"

[grid]
length = [0, 1, 2]
memory = ["fs:2", "fs:kstar", "as:2"]
"#;

#[test]
fn sweep_output_is_independent_of_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("sweep.toml"), SWEEP).unwrap();
    let a = stdout_first_line(&adastack(&["sweep", "sweep.toml", "--parallelism", "1", "--output", "one"], tmp.path()));
    let b = stdout_first_line(&adastack(&["sweep", "sweep.toml", "--parallelism", "6", "--output", "six"], tmp.path()));
    for f in ["aggregate.csv", "summary.csv", "failures.csv", "grid_L2_as-2/seed_1.csv"] {
        let x = std::fs::read(tmp.path().join(&a).join(f)).unwrap();
        let y = std::fs::read(tmp.path().join(&b).join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let summary = std::fs::read_to_string(tmp.path().join(&a).join("summary.csv")).unwrap();
    let cells: BTreeSet<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(cells.len(), 9);
}

#[test]
fn empty_sweep_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SWEEP.split("[grid]").next().unwrap();
    std::fs::write(tmp.path().join("sweep.toml"), text).unwrap();
    let e = error_line(&adastack(&["sweep", "sweep.toml"], tmp.path()));
    assert_eq!(e["error"]["kind"], "invalid_config");
}

#[test]
fn eval_then_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = TRAIN.to_vec();
    args[6] = "episodic";
    let dir = stdout_first_line(&adastack(&args, tmp.path()));
    let dir_s = dir.to_str().unwrap();
    let eval = stdout_first_line(&adastack(&["eval", "--run-dir", dir_s, "--lengths", "2,8", "--episodes", "50"], tmp.path()));
    let text = std::fs::read_to_string(tmp.path().join(eval)).unwrap();
    assert!(text.starts_with(&EVAL_HEADER.join(",")));
    assert!(text.contains("passive_tmaze-L8-episodic"));

    let csv = format!("{dir_s}/seed_0.csv");
    let o = adastack(&["plot", &csv, "--out", "svg"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("svg/panels.svg").exists());
    assert!(tmp.path().join("svg/success.svg").exists());

    std::fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let e = error_line(&adastack(&["plot", "empty.csv"], tmp.path()));
    assert_eq!(e["error"]["kind"], "data");
}

#[test]
fn oracle_and_cost_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adastack(&["oracle", "--model", "passive:3", "--k", "2", "--format", "csv"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], "0.009834000");
    let o = adastack(&["cost", "--context", "2", "--hidden", "4", "--actions", "3", "--format", "csv"], tmp.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("mlp,fs,2,136,")));
    let e = error_line(&adastack(&["cost", "--hidden", "0"], tmp.path()));
    assert_eq!(e["error"]["kind"], "invalid_config");
}
