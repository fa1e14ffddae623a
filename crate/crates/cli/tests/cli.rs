use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_intercept"));
    c.env_remove("INTERCEPT_LOG_LEVEL");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// A copy of a shipped scenario with a shorter run, written into `dir`.
fn short_scenario(dir: &Path, name: &str, duration: f64) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(scenario(name)).unwrap()).unwrap();
    v["run"]["duration"] = duration.into();
    let path = dir.join(format!("short_{name}"));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_nominal_writes_result_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run(bin().args(["run", "--log-ticks", "--scenario"]).arg(scenario("leader_follower.json")).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result: serde_json::Value = serde_json::from_slice(&fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["schema_version"], 1);
    assert_eq!(result["success"], true);
    let ticks = fs::read_to_string(out.join("ticks.csv")).unwrap();
    assert!(ticks.lines().count() > 100);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
}

#[test]
fn unknown_key_is_named_and_exits_one() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(scenario("leader_follower.json")).unwrap();
    assert!(text.contains("\"v_max\""));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.replacen("\"v_max\"", "\"v_maxx\"", 1)).unwrap();
    let o = run(bin().args(["run", "--scenario"]).arg(&bad).arg("--out").arg(dir.path().join("out")));
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("v_maxx"), "{err}");
    assert!(err.contains("line"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_file_and_usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let o = run(bin().args(["run", "--scenario"]).arg(dir.path().join("nope.json")).arg("--out").arg(dir.path()));
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(bin().args(["run", "--scenario", "x.json"]))), 1);
    assert_eq!(code(&run(bin().arg("frobnicate"))), 1);
    assert_eq!(code(&run(bin().arg("--help"))), 0);
}

#[test]
fn mission_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    // Far too short for the follower to settle.
    let s = short_scenario(dir.path(), "leader_follower.json", 1.0);
    let o = run(bin().args(["run", "--scenario"]).arg(&s).arg("--out").arg(dir.path().join("out")));
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(dir.path().join("out/result.json").exists());
}

#[test]
fn seed_override_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "uav_dropout.json", 8.0);
    let go = |tag: &str, seed: &str| {
        let out = dir.path().join(tag);
        let o = run(bin().args(["run", "--log-ticks", "--seed", seed, "--scenario"]).arg(&s).arg("--out").arg(&out));
        assert!(code(&o) != 1, "{}", stderr(&o));
        (fs::read(out.join("result.json")).unwrap(), fs::read(out.join("ticks.csv")).unwrap())
    };
    let a = go("a", "42");
    let b = go("b", "42");
    let c = go("c", "43");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
    let r: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(r["seed"], 42);
}

#[test]
fn batch_counts_and_parallel_agree() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "leader_follower.json", 6.0);
    let go = |tag: &str, k: &str| {
        let out = dir.path().join(tag);
        let o = run(bin().args(["batch", "--trials", "4", "--base-seed", "3", "--parallel", k, "--scenario"]).arg(&s).arg("--out").arg(&out));
        assert!(code(&o) == 0, "{}", stderr(&o));
        out
    };
    let one = go("one", "1");
    let four = go("four", "4");
    let a = fs::read(one.join("batch.json")).unwrap();
    assert_eq!(a, fs::read(four.join("batch.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let success = v["success"].as_str().unwrap();
    assert!(success.ends_with("/4"), "{success}");
    assert_eq!(v["trials"].as_array().unwrap().len(), 4);
    for seed in 3..7 {
        assert!(one.join(format!("trials/result_seed{seed}.json")).exists());
    }
}

#[test]
fn batch_min_success_and_zero_trials() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "leader_follower.json", 1.0);
    let out = dir.path().join("out");
    let o = run(bin().args(["batch", "--trials", "0", "--scenario"]).arg(&s).arg("--out").arg(&out));
    assert_eq!(code(&o), 1);
    let o = run(bin().args(["batch", "--trials", "2", "--min-success", "0.5", "--scenario"]).arg(&s).arg("--out").arg(&out));
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(bin().args(["batch", "--trials", "2", "--scenario"]).arg(&s).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn sweep(dir: &Path, s: &Path, mode: &str, grid: &str, tag: &str) -> (Output, PathBuf) {
    let out = dir.join(tag);
    let o = run(bin().args(["sweep", "--trials", "1", "--mode", mode, "--grid", grid, "--scenario"]).arg(s).arg("--out").arg(&out));
    (o, out.join("sweep.csv"))
}

#[test]
fn dropout_sweep_rows_and_rerun() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "uav_dropout.json", 4.0);
    let (o, csv) = sweep(dir.path(), &s, "dropout", "durations=0,3,5,7,9", "a");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("duration_s,prediction,"));
    assert_eq!(lines.len() - 1, 2 * 5);
    let (_, again) = sweep(dir.path(), &s, "dropout", "durations=0,3,5,7,9", "b");
    assert_eq!(fs::read(&csv).unwrap(), fs::read(again).unwrap());
}

#[test]
fn corruption_sweep_rows() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "spacecraft_corruption.json", 2.0);
    let (o, csv) = sweep(dir.path(), &s, "corruption", "rates=5,10,30;pcorrupt=0,0.25,0.5,0.75", "a");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("rate_hz,p_corrupt,prediction,"));
    assert_eq!(text.lines().count() - 1, 24);
}

#[test]
fn bad_grid_exits_one() {
    let dir = TempDir::new().unwrap();
    for (mode, grid) in [("dropout", "durations=a"), ("corruption", "rates=5"), ("dropout", "pcorrupt=0.1")] {
        let (o, csv) = sweep(dir.path(), &scenario("uav_dropout.json"), mode, grid, "x");
        assert_eq!(code(&o), 1, "{mode} {grid}");
        assert!(!csv.exists());
    }
}

#[test]
fn schema_prints_one_line_with_defaults() {
    let o = run(bin().arg("schema"));
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["keys"]["planner"]["default"]["history_len"].is_number());
    assert!(v["keys"]["planner"]["default"].get("innovation_gate").is_some());
    assert!(v["keys"]["limits"]["default"]["v_max"].is_number());
    assert!(v["example"]["run"]["duration"].is_number());
}

#[test]
fn log_level_controls_stderr_only() {
    let dir = TempDir::new().unwrap();
    let s = short_scenario(dir.path(), "leader_follower.json", 1.0);
    let quiet = run(bin().args(["run", "--scenario"]).arg(&s).arg("--out").arg(dir.path().join("q")));
    let loud = run(bin().env("INTERCEPT_LOG_LEVEL", "debug").args(["run", "--scenario"]).arg(&s).arg("--out").arg(dir.path().join("l")));
    assert!(quiet.stderr.is_empty(), "{}", stderr(&quiet));
    assert!(!loud.stderr.is_empty());
    assert_eq!(quiet.stdout, loud.stdout);
    assert_eq!(fs::read(dir.path().join("q/result.json")).unwrap(), fs::read(dir.path().join("l/result.json")).unwrap());
}
