//! End-to-end runs of the `rails` binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use common::*;
use rails::model::io::cohort_to_csv;

fn rails(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rails"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of a `name value` line printed by `estimate`.
fn printed(o: &Output, name: &str) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name} ")))
        .unwrap_or_else(|| panic!("no `{name}` line in {}", stdout(o)))
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

/// Writes the cohorts and margins of `fx` plus a `fit.toml` with the given
/// `[terms]` block. The NP outcome is 1 on every third row.
fn write_fit(dir: &Path, fx: CellFixture, terms: &str) -> PathBuf {
    let n = fx.np.n_rows();
    let y = (0..n).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let np = fx.np.with_outcome(y).unwrap();
    fs::write(dir.join("np.csv"), cohort_to_csv(&np)).unwrap();
    fs::write(dir.join("p.csv"), cohort_to_csv(&fx.p)).unwrap();
    fs::write(dir.join("margins.csv"), fx.targets.to_csv_string()).unwrap();
    let cfg = dir.join("fit.toml");
    fs::write(
        &cfg,
        format!("np_cohort = \"np.csv\"\np_cohort = \"p.csv\"\nmargins = \"margins.csv\"\nout = \"out\"\n\n[terms]\n{terms}\n"),
    )
    .unwrap();
    cfg
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn planted_ab() -> Planted<'static> {
    Planted {
        term: "a:b",
        cell: &["1", "2"],
        coef: 1.5,
    }
}

#[test]
fn empty_pool_calibrates_mains() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(
        dir.path(),
        cell_fixture(&[], &[], &["0", "1"]),
        "mains = [\"a\", \"b\", \"c\"]\npool = []",
    );
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["converged"], true);
    assert!(r["selection"]["steps"].as_array().unwrap().is_empty());
    assert!(r["residuals"]["max_residual"].as_f64().unwrap() <= 1e-6);
    let labels: Vec<&str> = r["residuals"]["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(labels.iter().all(|l| !l.contains(':')), "{labels:?}");
    assert!(dir.path().join("out/weights.csv").is_file());
    assert!(dir.path().join("out/summary.txt").is_file());
}

#[test]
fn unknown_margin_variable_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(dir.path(), cell_fixture(&[], &[], &["0", "1"]), "pool = []");
    let mut margins = fs::read_to_string(dir.path().join("margins.csv")).unwrap();
    let n: f64 = margins
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    margins.push_str(&format!("zz,1,{n}\n"));
    fs::write(dir.path().join("margins.csv"), margins).unwrap();
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("zz"), "{}", stderr(&o));
}

#[test]
fn structural_zero_interaction_is_removed() {
    let dir = tempfile::tempdir().unwrap();
    let fx = cell_fixture(
        &[planted_ab()],
        &[(["1", "1", "0"], 300.0), (["1", "1", "1"], 300.0)],
        &["0", "1"],
    );
    let cfg = write_fit(dir.path(), fx, "mains = [\"a\", \"b\", \"c\"]");
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["removed_by_lifo"], serde_json::json!(["a:b"]));
    assert_eq!(r["converged"], true);
}

#[test]
fn exhausted_lifo_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let fx = cell_fixture(
        &[planted_ab()],
        &[(["0", "0", "2"], 500.0)],
        &["0", "1", "2"],
    );
    let cfg = write_fit(dir.path(), fx, "mains = [\"a\", \"b\", \"c\"]");
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let r = report(dir.path());
    assert_eq!(r["converged"], false);
    assert_eq!(r["removed_by_lifo"], serde_json::json!(["a:b"]));
}

#[test]
fn fit_then_estimate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(
        dir.path(),
        cell_fixture(&[planted_ab()], &[], &["0", "1"]),
        "max_order = 2",
    );
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let expected = report(dir.path())["estimate"]["estimate"].as_f64().unwrap();
    let weights = dir.path().join("out/weights.csv");
    let np = dir.path().join("np.csv");
    let e = rails(&[
        "estimate",
        "--weights",
        weights.to_str().unwrap(),
        "--cohort",
        np.to_str().unwrap(),
    ]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    assert!((printed(&e, "estimate") - expected).abs() <= 1e-12);
}

#[test]
fn fit_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(
        dir.path(),
        cell_fixture(&[planted_ab()], &[], &["0", "1"]),
        "max_order = 2",
    );
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = rails(&["fit", "--config", cfg.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(code(&o), 0);
        let files: Vec<Vec<u8>> = ["weights.csv", "report.json", "summary.txt"]
            .iter()
            .map(|f| fs::read(dir.path().join("out").join(f)).unwrap())
            .collect();
        runs.push((o.stdout, files));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = rails(&[
            "simulate",
            "S1",
            "--reps",
            "1",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let files: Vec<Vec<u8>> = [
            "metrics.csv",
            "replications.csv",
            "report.json",
            "summary.txt",
        ]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
        outs.push((o.stdout, files));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn unknown_scenario_exits_one() {
    let o = rails(&["simulate", "S9", "--reps", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("S9"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&rails(&["fit"])), 1);
    assert_eq!(code(&rails(&["frobnicate"])), 1);
    assert_eq!(code(&rails(&["--help"])), 0);
}

fn write_estimate(dir: &Path, cohort: &str, weights: &str) -> (String, String) {
    let c = dir.join("cohort.csv");
    let w = dir.join("weights.csv");
    fs::write(&c, cohort).unwrap();
    fs::write(&w, weights).unwrap();
    (
        c.to_str().unwrap().to_string(),
        w.to_str().unwrap().to_string(),
    )
}

#[test]
fn estimate_constant_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let (c, w) = write_estimate(
        dir.path(),
        "_id,g,_outcome\na,0,1\nb,1,1\nc,1,1\n",
        "_id,weight\na,2\nb,5\nc,1\n",
    );
    let o = rails(&["estimate", "--weights", &w, "--cohort", &c]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(printed(&o, "estimate"), 1.0);
    assert_eq!(printed(&o, "std_error"), 0.0);
}

#[test]
fn estimate_toy_example() {
    let dir = tempfile::tempdir().unwrap();
    let (c, w) = write_estimate(
        dir.path(),
        "g,_outcome\n0,1\n1,0\n",
        "_id,weight\n1,3\n0,1\n",
    );
    let o = rails(&["estimate", "--weights", &w, "--cohort", &c]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("estimate 0.25"), "{}", stdout(&o));
}

#[test]
fn estimate_with_two_group_missingness() {
    let fx = missing_fixture();
    let mut cohort = String::from("_id,g,complete,_outcome\n");
    let mut weights = String::from("_id,weight\n");
    for i in 0..fx.weights.len() {
        let g = fx.group[i];
        cohort.push_str(&format!("r{i},{g},{},{g}\n", u8::from(fx.complete[i])));
        weights.push_str(&format!("r{i},{}\n", fx.weights[i]));
    }
    let dir = tempfile::tempdir().unwrap();
    let (c, w) = write_estimate(dir.path(), &cohort, &weights);
    let o = rails(&[
        "estimate",
        "--weights",
        &w,
        "--cohort",
        &c,
        "--missing",
        "complete",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // The outcome is the group indicator, so the estimate is the restored
    // weight share of group 1: 60·7 / (50·3 + 60·7).
    assert!((printed(&o, "estimate") - 420.0 / 570.0).abs() <= 1e-8);
    assert_eq!(printed(&o, "complete_rows"), 64.0);
}

#[test]
fn estimate_id_mismatch_lists_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (c, w) = write_estimate(
        dir.path(),
        "_id,g,_outcome\na,0,1\nb,1,0\n",
        "_id,weight\na,1\nzq,2\n",
    );
    let o = rails(&["estimate", "--weights", &w, "--cohort", &c]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("\"b\"") && err.contains("\"zq\""), "{err}");
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(dir.path(), cell_fixture(&[], &[], &["0", "1"]), "pool = []");
    let p = dir.path().join("p.csv");
    let mut lines: Vec<String> = fs::read_to_string(&p)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines[3] = lines[3]
        .rsplit_once(',')
        .map(|(head, _)| format!("{head},heavy"))
        .unwrap();
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("p.csv:4"), "{}", stderr(&o));
}

#[test]
fn cohort_column_mismatch_is_diffed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fit(dir.path(), cell_fixture(&[], &[], &["0", "1"]), "pool = []");
    let np = dir.path().join("np.csv");
    let text = fs::read_to_string(&np).unwrap().replacen(",c,", ",d,", 1);
    fs::write(&np, text).unwrap();
    let o = rails(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("\"c\"") && err.contains("\"d\""), "{err}");
}
