use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minimax-lq"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn csv_column(text: &str, column: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

fn steady_p(dump: &str) -> f64 {
    let mut lines = dump.lines();
    lines.by_ref().find(|l| l.starts_with("P "));
    lines.next().unwrap().trim().parse().unwrap()
}

#[test]
fn scalar_steady_state_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("scalar.toml");
    let o = run(&["solve-infinite", "--scenario", sc.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let p = steady_p(&read(dir.path(), "solution.txt"));
    let golden_text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/scalar_steady_p.txt"))
            .unwrap();
    let golden: f64 = golden_text.lines().find(|l| !l.starts_with('#')).unwrap().trim().parse().unwrap();
    assert!((p - golden).abs() <= 1e-10, "{p} vs golden {golden}");
    // 0.9p² − 0.9p − 1 = 0 at λ = 10 with A = B = Ξ = Q = R = 1
    assert!((p - 5.0 / 3.0).abs() <= 1e-10, "{p}");
    let cert: serde_json::Value = serde_json::from_str(&read(dir.path(), "certificate.json")).unwrap();
    assert_eq!(cert["method"], "Both");
    assert_eq!(cert["stability"]["stable"], true);
    let policy = read(dir.path(), "policy.csv");
    assert_eq!(policy.lines().next().unwrap(), "row,K_0,L");
}

#[test]
fn penalty_below_threshold_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let o = run(&["solve-finite", "--scenario", sc.to_str().unwrap(), "--lambda", "0.0005"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PenaltyTooSmall at stage t="), "{}", stderr(&o));
    assert!(!dir.path().join("solution.txt").exists());
}

#[test]
fn steady_assumption_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("scalar.toml");
    let o = run(&["solve-infinite", "--scenario", sc.to_str().unwrap(), "--lambda", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn malformed_config_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nA = [[1.0, 2.0], [3.0]]\nB = 1.0\nXi = 1.0\n").unwrap();
    let o = run(&["solve-finite", "--scenario", bad.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(64));
    let o = bin().args(["tune", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(64));
    let o = run(&["solve-finite"], &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(64), "missing scenario");
}

#[test]
fn theta_sweep_gives_decreasing_lambda_and_warns_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let o = run(&["tune", "--scenario", sc.to_str().unwrap(), "--theta", "0,0.05,0.1,0.3,1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: MonotoneTail"));
    let lambdas: Vec<f64> =
        csv_column(&read(dir.path(), "tuned.csv"), "lambda_star").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 5);
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]), "{lambdas:?}");
}

#[test]
fn tune_is_byte_identical_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let args = ["tune", "--scenario", sc.to_str().unwrap(), "--theta", "0.1,0.3"];
    assert!(run(&args, &dir.path().join("a")).status.success());
    assert!(run(&args, &dir.path().join("b")).status.success());
    for f in ["tuned.csv", "evaluations.csv", "manifest.json"] {
        assert_eq!(read(&dir.path().join("a"), f), read(&dir.path().join("b"), f), "{f}");
    }
    let o = bin().arg("replay").arg("--manifest").arg(dir.path().join("a/manifest.json")).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn replay_detects_tampered_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    assert!(run(&["radius", "--scenario", sc.to_str().unwrap()], dir.path()).status.success());
    let manifest_path = dir.path().join("manifest.json");
    let text = read(dir.path(), "manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    manifest["outputs"][0]["sha256"] = serde_json::json!("0".repeat(64));
    std::fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let o = bin().arg("replay").arg("--manifest").arg(&manifest_path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("radius.csv"));
}

#[test]
fn single_deterministic_run_has_zero_std_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let o = run(&["simulate", "--scenario", sc.to_str().unwrap(), "--runs", "1", "--disturbance", "hinf"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let est = read(dir.path(), "estimates.csv");
    for se in csv_column(&est, "std_error") {
        assert_eq!(se.parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(csv_column(&est, "n_runs"), ["1", "1"]);
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let args = ["simulate", "--scenario", sc.to_str().unwrap(), "--runs", "30", "--seed", "9", "--lambda", "2.0"];
    assert!(run(&args, &dir.path().join("a")).status.success());
    assert!(run(&args, &dir.path().join("b")).status.success());
    for f in ["estimates.csv", "bands.csv", "summary.json"] {
        assert_eq!(read(&dir.path().join("a"), f), read(&dir.path().join("b"), f), "{f}");
    }
    let est = read(&dir.path().join("a"), "estimates.csv");
    assert!(est.starts_with("cost,mean,std_error,n_runs,seed\ntotal,"));
}

#[test]
fn radius_table_shrinks_with_n() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    assert!(run(&["radius", "--scenario", sc.to_str().unwrap(), "--beta", "0.1"], dir.path()).status.success());
    let text = read(dir.path(), "radius.csv");
    assert_eq!(text.lines().next().unwrap(), "N,T,beta,theta");
    let thetas: Vec<f64> = csv_column(&text, "theta").iter().map(|s| s.parse().unwrap()).collect();
    assert!(thetas.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn reliability_sweep_emits_table() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("double_integrator.toml");
    let o = run(
        &["reliability", "--scenario", sc.to_str().unwrap(), "--theta", "0.05,0.5", "--runs", "12", "--horizon", "10"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(dir.path(), "reliability.csv");
    let rel: Vec<f64> = csv_column(&text, "reliability").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(rel.len(), 2);
    assert!(rel[1] >= rel[0]);
    assert_eq!(read(dir.path(), "trials.csv").lines().count(), 1 + 2 * 12);
}

#[test]
fn grid_demo_emits_per_generator_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["grid-demo", "--runs", "8", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let settling = read(dir.path(), "settling.csv");
    assert_eq!(settling.lines().next().unwrap(), "generator,minimax_s,minimax_settled,lqg_s,lqg_settled");
    assert_eq!(settling.lines().count(), 11);
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["runs"], 8);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["seeds"]["simulation"], 3);
    assert_eq!(manifest["seeds"]["samples"], 2024);
}

#[test]
fn disturbance_flag_is_simulate_only() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("scalar.toml");
    let o = run(&["solve-infinite", "--scenario", sc.to_str().unwrap(), "--disturbance", "truth"], dir.path());
    assert_eq!(o.status.code(), Some(64));
}
