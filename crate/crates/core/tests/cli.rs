use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_habitgrowth");

fn baseline_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/baseline.toml")
}

fn baseline_text() -> String {
    std::fs::read_to_string(baseline_file()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn hg(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_oracle(text: &str) -> String {
    text.replace("oracle_n = 200", "oracle_n = 50\noracle_horizon = 2.0")
        .replace("trials = 100", "trials = 20")
        .replace("ascent_iters = 2000", "ascent_iters = 50")
}

#[test]
fn baseline_scenario_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = hg(&["run", baseline_file().to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reason"], "ok");
    assert_eq!(report["oracle"]["status"], "done");
    assert_eq!(report["oracle"]["improvements"], 0);
    for c in report["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], true, "{c}");
    }
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,k,c,h,G,c_minus_h,lambda_check,external_residual\n"));
    assert_eq!(csv.lines().count(), 1 + 1601);
    assert!(out.join("feasibility.csv").exists());
    assert!(out.join("report.txt").exists());
}

#[test]
fn growth_violation_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "s.toml", &baseline_text().replace("eps = 0.5", "eps = 1.5"));
    let o = hg(&["run", f.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("reason=RegimeError(growth)"), "{err}");
}

#[test]
fn finite_value_violation_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = baseline_text().replace("gamma = 2.0", "gamma = 0.5").replace("rho = 0.04", "rho = 0.1");
    let f = write(tmp.path(), "s.toml", &text);
    let o = hg(&["run", f.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("reason=RegimeError(finite-value)"));
}

#[test]
fn low_capital_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "s.toml", &baseline_text().replace("k0 = 10.0", "k0 = 0.1"));
    let out = tmp.path().join("o");
    let o = hg(&["run", f.to_str().unwrap(), "-o", out.to_str().unwrap(), "--no-oracle"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("reason=Infeasible(initial-capital)"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["feasibility"]["verdict"], "Infeasible");
    assert_eq!(report["simulation"]["status"], "skipped");
}

#[test]
fn failed_check_exits_one() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{}\n[numerics.tolerances]\ng_drift = 1e-12\n", baseline_text());
    let f = write(tmp.path(), "s.toml", &text);
    let o = hg(&["run", f.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap(), "--no-oracle"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("reason=CheckFailed(g_drift)"));
}

#[test]
fn input_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = hg(&["run", tmp.path().join("missing.toml").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("reason=IoError"));

    let bad = write(tmp.path(), "bad.toml", "[params\neps = ");
    let o = hg(&["run", bad.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("reason=ParseError"));

    let neg = write(tmp.path(), "neg.toml", &baseline_text().replace("n = 200", "n = 0"));
    assert_eq!(code(&hg(&["run", neg.to_str().unwrap(), "-o", out.to_str().unwrap()])), 3);

    assert_eq!(code(&hg(&["frobnicate"])), 3);
    assert_eq!(code(&hg(&["run"])), 3);
}

#[test]
fn check_only_and_plot_data() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let f = baseline_file();
    let o = hg(&["run", f.to_str().unwrap(), "-o", out.to_str().unwrap(), "--no-oracle", "--check-only", "--plot-data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!out.join("trajectory.csv").exists());
    assert!(out.join("report.json").exists());
    for name in ["plot_paths.csv", "plot_g_drift.csv", "plot_residuals.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(text.lines().count(), 1602, "{name}");
    }
}

#[test]
fn identical_inputs_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "s.toml", &small_oracle(&baseline_text()));
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = hg(&["run", f.to_str().unwrap(), "-o", out.to_str().unwrap(), "--plot-data", "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    for name in ["trajectory.csv", "feasibility.csv", "plot_paths.csv", "plot_residuals.csv", "report.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let ja = std::fs::read_to_string(a.join("report.json")).unwrap();
    let jc = std::fs::read_to_string(c.join("report.json")).unwrap();
    assert_ne!(ja, jc, "seed must reach the perturbation suite");
}

fn sweep_rows(out: &Path, param: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(out.join(format!("sweep_{param}.csv"))).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["value", "lambda0", "Lambda", "Gamma", "max_drift", "verdict", "exit_code", "reason"]
    );
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn tau_sweep_root_increases_toward_limit() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let f = baseline_file();
    hg(&["sweep", f.to_str().unwrap(), "--param", "tau", "--values", "0.5,1,2,5", "-o", out.to_str().unwrap(), "--no-oracle"]);
    let rows = sweep_rows(&out, "tau");
    let roots: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(roots.len(), 4);
    assert!(roots.windows(2).all(|w| w[0] < w[1]), "{roots:?}");
    assert!(roots.iter().all(|&l| l < -0.5));
}

#[test]
fn k0_sweep_flips_verdict_once() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let f = baseline_file();
    let o = hg(&[
        "sweep", f.to_str().unwrap(), "--param", "k0", "--values", "0.05,0.1,0.15,0.2,0.5,1,10",
        "-o", out.to_str().unwrap(), "--no-oracle",
    ]);
    assert_eq!(code(&o), 1, "infeasible rows make the sweep fail");
    let verdicts: Vec<String> = sweep_rows(&out, "k0").into_iter().map(|r| r[5].clone()).collect();
    let flips = verdicts.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(flips, 1, "{verdicts:?}");
    assert_eq!(verdicts[0], "infeasible");
    assert_eq!(verdicts[6], "feasible");
}

#[test]
fn passing_sweep_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let f = baseline_file();
    let o = hg(&["sweep", f.to_str().unwrap(), "--param", "gamma", "--values", "1.5,2,3", "-o", tmp.path().to_str().unwrap(), "--no-oracle"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn sweep_input_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let f = baseline_file();
    let f = f.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&hg(&["sweep", f, "--param", "k0", "--values", "", "-o", out])), 3);
    assert_eq!(code(&hg(&["sweep", f, "--param", "A", "--values", "1", "-o", out])), 3);
    assert_eq!(code(&hg(&["sweep", f, "--param", "k0", "--values", "1,x", "-o", out])), 3);
}
