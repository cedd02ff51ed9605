use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pqlearn(args: &[&str], cwd: &Path, env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pqlearn"));
    cmd.args(args).current_dir(cwd).env_remove("PQ_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{"generator": {"S": 3, "A": 2, "gamma": 0.8, "seed": 5}, "T": 3, "N": 100, "seeds": 2}"#;

#[test]
fn bounds_prints_key_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = pqlearn(
        &["bounds", "--epsilon", "1", "--gamma", "0.5", "--states", "2", "--actions", "1"],
        dir.path(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("required_inner_steps=262144\n"), "{out}");
    assert!(out.contains("required_outer_iters=3\n"), "{out}");
    assert!(out.contains("sample_complexity_policy=20971520\n"), "{out}");
    assert!(out.contains("schedule_beta=4\n"), "{out}");
    assert!(out.contains("schedule_lambda=32\n"), "{out}");
    assert!(stderr(&o).contains("warning"));

    let o = pqlearn(
        &["bounds", "--epsilon", "2", "--gamma", "0.5", "--states", "2", "--actions", "1"],
        dir.path(),
        &[],
    );
    assert!(stdout(&o).contains("sample_complexity_policy=undefined"));

    let o = pqlearn(
        &["bounds", "--epsilon", "0.1", "--gamma", "1.5", "--states", "2", "--actions", "1"],
        dir.path(),
        &[],
    );
    assert!(!o.status.success());
}

#[test]
fn run_writes_to_flag_config_or_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();

    let o = pqlearn(&["run", "--config", "small.json", "--out", "flag_out", "--seeds", "3"], dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("flag_out/trace_seed002.csv").exists());
    assert!(stdout(&o).contains("seeds=3"));

    let env_dir = dir.path().join("env_out");
    let o = pqlearn(&["run", "--config", "small.json"], dir.path(), &[("PQ_OUT_DIR", &env_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("summary.csv").exists());
    assert!(!env_dir.join("trace_seed002.csv").exists());

    let with_output = SMALL.replace("\"seeds\": 2", "\"seeds\": 2, \"output\": \"cfg_out\"");
    fs::write(dir.path().join("with_output.json"), with_output).unwrap();
    let o = pqlearn(&["run", "--config", "with_output.json", "--threads", "1"], dir.path(), &[("PQ_OUT_DIR", &env_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("cfg_out/outer.csv").exists());
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        SMALL.replace("\"seeds\": 2", "\"seeds\": 2, \"learning_rate_decay\": 1"),
    )
    .unwrap();
    let o = pqlearn(&["run", "--config", "bad.json", "--out", "x"], dir.path(), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("learning_rate_decay"), "{}", stderr(&o));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn validate_reports_good_and_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"num_states": 2, "num_actions": 1, "gamma": 0.9,
        "transitions": [[[0.5, 0.5], [0.0, 1.0]]], "rewards": [[1.0], [-1.0]]}"#;
    fs::write(dir.path().join("good.json"), good).unwrap();
    fs::write(dir.path().join("bad.json"), good.replace("[0.0, 1.0]", "[0.2, 1.0]")).unwrap();

    let o = pqlearn(&["validate", "good.json"], dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: 2 states, 1 actions"));

    let o = pqlearn(&["validate", "bad.json"], dir.path(), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sum"), "{}", stderr(&o));
}

#[test]
fn compare_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let pq = r#"{"generator": {"S": 3, "A": 2, "gamma": 0.8, "seed": 5}, "T": 4, "N": 250, "seeds": 3, "epsilon": 0.04}"#;
    let std = r#"{"generator": {"S": 3, "A": 2, "gamma": 0.8, "seed": 5}, "algorithm": "standard", "steps": 1000,
        "eval_every": 250, "seeds": 3, "epsilon": 0.04}"#;
    fs::write(dir.path().join("pq.json"), pq).unwrap();
    fs::write(dir.path().join("std.json"), std).unwrap();

    let o = pqlearn(
        &["compare", "--config", "pq.json", "--baseline", "std.json", "--budget", "1000", "--out", "cmp"],
        dir.path(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[5].starts_with("1000,"));

    let o = pqlearn(
        &["compare", "--config", "pq.json", "--baseline", "std.json", "--budget", "999", "--out", "cmp2"],
        dir.path(),
        &[],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("budget"), "{}", stderr(&o));
}
