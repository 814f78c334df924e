use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ucb_experts::config::ExperimentConfig;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucb-experts")).current_dir(dir).args(args).output().unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["print-default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
}

#[test]
fn run_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["run", "--rounds", "60", "--reps", "2", "--t0", "8", "--out", "res"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    assert_eq!(lines(&res.join("trace.csv")), 1 + 2 * 60);
    assert_eq!(lines(&res.join("aggregate.csv")), 1 + 60);
    assert_eq!(lines(&res.join("analysis.csv")), 1 + 4);
    assert!(res.join("summary.txt").exists());
}

#[test]
fn sweep_writes_one_directory_per_t0() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["sweep", "--rounds", "30", "--reps", "1", "--t0", "4,9", "--out", "sw"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sw = dir.path().join("sw");
    for t0 in [4, 9] {
        assert_eq!(lines(&sw.join(format!("t0_{t0}/aggregate.csv"))), 31);
    }
    assert_eq!(lines(&sw.join("summary.txt")), 3);
}

#[test]
fn invalid_config_exits_with_config_code_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[schedule]\nt0 = 0\n").unwrap();
    let out = cli(dir.path(), &["run", "--config", "bad.toml", "--out", "res"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schedule.t0"));
    assert!(!dir.path().join("res").exists());

    fs::write(dir.path().join("typo.toml"), "[run]\nrepetitons = 3\n").unwrap();
    let out = cli(dir.path(), &["run", "--config", "typo.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["analyze", "--config", "absent.toml"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn periodic_layout_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("periodic.toml"), "[grid]\nrows = [\"SNG\", \"NNN\"]\n").unwrap();
    let out = cli(dir.path(), &["run", "--config", "periodic.toml", "--rounds", "20", "--reps", "1", "--out", "res"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn explicit_ucb_baseline_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["baseline", "--selector", "ucb"]);
    assert_eq!(out.status.code(), Some(3));
}
