use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stochcut"));
    c.env_remove("STOCHCUT_SEED").env_remove("STOCHCUT_THREADS");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn solve(problem: &str, method: &str, out: &Path, extra: &[&str]) -> Output {
    let p = data(problem);
    let mut args = vec!["solve", "--problem", p.to_str().unwrap(), "--method", method, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn sddp_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let o = solve("newsvendor.json", "sddp", dir.path(), &["--iters", "50", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("lower bound 3.000000000"), "{stdout}");
    let s = summary(dir.path());
    assert_eq!(s["method"], "sddp");
    assert_eq!(s["seed"], 7);
    assert_eq!(s["stop_rule"], "gap");
    assert!((s["lower_bound"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    let st = &s["statistical_upper_bound"];
    let edge = st["mean"].as_f64().unwrap() + st["z_alpha"].as_f64().unwrap() * st["std_error"].as_f64().unwrap();
    assert!((edge - st["edge"].as_f64().unwrap()).abs() < 1e-12);
    let csv = fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
    assert!(csv.starts_with("iteration,lower_bound,dual_upper_bound,wall_time,cuts\n"));
    assert_eq!(csv.lines().count(), 1 + s["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["solve", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--threads", "0", "oracle", "--check", "--fixture", "newsvendor"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_file_is_a_usage_error() {
    let o = run(&["solve", "--problem", "/nonexistent/problem.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn invalid_problem_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"stages": [{"realizations": [{"c": [1.0], "A": [], "b": [], "p": 0.5}]}]}"#).unwrap();
    let o = run(&["solve", "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("probability sum"));
    fs::write(&p, "{ not json").unwrap();
    assert_eq!(code(&run(&["solve", "--problem", p.to_str().unwrap()])), 3);
    // free variables are fine for DSA but not for cutting planes
    let o = solve("dsa.json", "sddp", dir.path(), &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn infeasible_recourse_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(data("newsvendor.json")).unwrap()).unwrap();
    // h, s <= 0.5 leaves no first-stage order feasible for both demands
    doc["stages"][1]["ub"] = serde_json::json!([0.5, 0.5]);
    let p = dir.path().join("tight.json");
    fs::write(&p, doc.to_string()).unwrap();
    let o = run(&["solve", "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage 1, realization"), "{err}");
}

fn strip_times(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"timestamp\"") && !l.contains("\"elapsed_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn identical_runs_give_identical_summaries() {
    for (file, method) in [("random.json", "sddp"), ("random.json", "eddp"), ("stationary.json", "stationary")] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert_eq!(code(&solve(file, method, a.path(), &["--seed", "11"])), 0);
        assert_eq!(code(&solve(file, method, b.path(), &["--seed", "11", "--threads", "1"])), 0);
        let sa = fs::read_to_string(a.path().join("summary.json")).unwrap();
        let sb = fs::read_to_string(b.path().join("summary.json")).unwrap();
        assert_eq!(strip_times(&sa), strip_times(&sb), "{method}");
    }
}

#[test]
fn environment_overrides_seed_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let p = data("newsvendor.json");
    let o = bin()
        .args(["solve", "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .env("STOCHCUT_SEED", "5")
        .env("STOCHCUT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(summary(dir.path())["seed"], 5);
    // the flag wins over the environment
    let o = bin()
        .args(["solve", "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "9"])
        .env("STOCHCUT_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(summary(dir.path())["seed"], 9);
}

#[test]
fn eddp_summary_carries_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let o = solve("random.json", "eddp", dir.path(), &["--epsilon", "0.05"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    let d = &s["details"];
    for key in ["k_bar", "iterations_used", "gap_certificate", "certified_gap"] {
        assert!(d[key].is_number(), "{key} missing: {d}");
    }
    assert_eq!(s["stop_rule"], "saturated");
}

#[test]
fn dual_and_bound_report_a_closed_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let o = solve("random.json", "dual", dir.path(), &[]);
    assert_eq!(code(&o), 0);
    let s = summary(dir.path());
    let lb = s["lower_bound"].as_f64().unwrap();
    let ub = s["upper_bound"].as_f64().unwrap();
    assert!(ub - lb <= 1e-4 * ub.abs() + 1e-9, "{lb} {ub}");
    let csv = fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse::<f64>().is_ok());

    let p = data("newsvendor.json");
    let o = run(&["bound", "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().next().unwrap().contains("gap"));
}

#[test]
fn simulate_reports_the_edge() {
    let dir = tempfile::tempdir().unwrap();
    let p = data("newsvendor.json");
    let o = run(&["simulate", "--problem", p.to_str().unwrap(), "--paths", "500", "--z-alpha", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let st = &summary(dir.path())["statistical_upper_bound"];
    assert_eq!(st["paths"], 500);
    assert_eq!(st["z_alpha"], 3.0);
}

#[test]
fn risk_file_replaces_the_risk_block() {
    let dir = tempfile::tempdir().unwrap();
    let risk = dir.path().join("risk.json");
    fs::write(&risk, r#"{"kind": "avar", "alpha": 0.5}"#).unwrap();
    let o = solve("newsvendor.json", "sddp", dir.path(), &["--risk-file", risk.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = summary(dir.path());
    // AV@R_0.5 puts all weight on the high-demand outcome
    assert!(s["lower_bound"].as_f64().unwrap() > 3.0 + 1e-6);
    assert!(s["statistical_upper_bound"].is_null());
    fs::write(&risk, r#"{"kind": "avar", "alpha": 1.5}"#).unwrap();
    assert_eq!(code(&solve("newsvendor.json", "sddp", dir.path(), &["--risk-file", risk.to_str().unwrap()])), 3);
}

#[test]
fn other_methods_run() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, &[&str]); 5] = [
        ("dsa.json", "dsa", &["--n1", "25", "--n2", "10", "--n3", "10", "--mode", "strong"]),
        ("stationary.json", "stationary", &[]),
        ("stationary.json", "periodic", &["--period", "2"]),
        ("control.json", "sddp", &["--floor", "-100"]),
        ("random.json", "sddp", &["--iters", "3"]),
    ];
    for (file, method, extra) in cases {
        let o = solve(file, method, dir.path(), extra);
        assert_eq!(code(&o), 0, "{method}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(summary(dir.path())["method"], method);
    }
    assert_eq!(summary(dir.path())["iterations"], 3);
    // a discounted method needs a discount factor
    assert_eq!(code(&solve("control.json", "stationary", dir.path(), &[])), 3);
    // three loop counts for a two-stage problem
    assert_eq!(code(&solve("newsvendor.json", "dsa", dir.path(), &["--loops", "5,5,5"])), 1);
}

#[test]
fn fit_lattice_writes_a_lattice_block() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let mut text = String::from("demand\n");
    for k in 0..300 {
        let v = ((k * 37) % 17) as f64 / 4.0 + (k % 3) as f64;
        text.push_str(&format!("{v}\n"));
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().join("lattice.json");
    let o = run(&["fit-lattice", "--series", csv.to_str().unwrap(), "--clusters", "3", "--period", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let centers = v["lattice"]["centers"].as_array().unwrap();
    assert_eq!(centers.len(), 4);
    assert_eq!(centers[0].as_array().unwrap().len(), 1);
    let transitions = v["lattice"]["transitions"].as_array().unwrap();
    assert_eq!(transitions.len(), 3);
    for m in transitions {
        for row in m.as_array().unwrap() {
            let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
    let o = run(&["fit-lattice", "--series", csv.to_str().unwrap(), "--clusters", "3", "--period", "400"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_check_passes_on_bundled_fixtures() {
    let o = run(&["oracle", "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let pass = out.lines().filter(|l| l.starts_with("PASS ")).count();
    assert_eq!(pass, 28, "{out}");
    assert_eq!(code(&run(&["oracle"])), 1);
    assert_eq!(code(&run(&["oracle", "--check", "--fixture", "nope"])), 1);
}
