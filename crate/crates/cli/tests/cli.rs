use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coupled-hmc"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn coupled-hmc")
}

fn ok(args: &[&str], out: &Path) {
    let o = run(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

struct CsvFile {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> CsvFile {
    let text = fs::read_to_string(path).unwrap();
    let comments = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(str::to_string)
        .collect();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    CsvFile { comments, header, rows }
}

fn config_of(f: &CsvFile) -> Value {
    let line = f.comments.iter().find(|l| l.starts_with("# config: ")).unwrap();
    serde_json::from_str(&line["# config: ".len()..]).unwrap()
}

fn col(f: &CsvFile, name: &str) -> usize {
    f.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const MEET: &[&str] = &[
    "meet", "--target", "gaussian", "--dim", "3", "--eps", "0.2", "--steps", "5", "--runs", "1",
    "--coupling", "w2", "--max-iters", "200", "--seed", "4",
];

#[test]
fn meet_single_cell_single_run() {
    let dir = TempDir::new().unwrap();
    ok(MEET, dir.path());
    let rows = read_csv(&dir.path().join("meet.csv"));
    assert_eq!(
        rows.header,
        ["run", "target", "kernel", "coupling", "momentum", "eps", "L", "tau", "met"]
    );
    assert_eq!(rows.rows.len(), 1);
    assert_eq!(rows.rows[0][col(&rows, "coupling")], "w2");
    let tau: usize = rows.rows[0][col(&rows, "tau")].parse().unwrap();
    assert!((1..=200).contains(&tau));
    assert_eq!(rows.comments[1], "# command: meet");
    assert_eq!(rows.comments[2], "# seed: 4");

    let summary = read_csv(&dir.path().join("meet_summary.csv"));
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(summary.rows[0][col(&summary, "runs")], "1");
    assert_eq!(config_of(&summary)["runs"], 1);
}

#[test]
fn meet_default_couplings_give_three_cells() {
    let dir = TempDir::new().unwrap();
    ok(
        &["meet", "--dim", "2", "--eps", "0.1,0.2", "--steps", "3", "--runs", "2", "--max-iters", "50"],
        dir.path(),
    );
    let summary = read_csv(&dir.path().join("meet_summary.csv"));
    assert_eq!(summary.rows.len(), 6);
    let rows = read_csv(&dir.path().join("meet.csv"));
    assert_eq!(rows.rows.len(), 12);
    for r in &rows.rows {
        let met: bool = r[col(&rows, "met")].parse().unwrap();
        let tau: usize = r[col(&rows, "tau")].parse().unwrap();
        assert!(met || tau == 50);
    }
}

#[test]
fn same_seed_is_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(MEET, a.path());
    ok(MEET, b.path());
    for f in ["meet.csv", "meet_summary.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn different_seed_changes_output() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "meet", "--dim", "3", "--eps", "0.2", "--steps", "5", "--runs", "5", "--coupling",
        "maximal", "--max-iters", "100",
    ];
    ok(&[&args[..], &["--seed", "1"]].concat(), a.path());
    ok(&[&args[..], &["--seed", "2"]].concat(), b.path());
    assert_ne!(
        fs::read(a.path().join("meet.csv")).unwrap(),
        fs::read(b.path().join("meet.csv")).unwrap()
    );
}

#[test]
fn meet_json_format() {
    let dir = TempDir::new().unwrap();
    ok(&[MEET, &["--format", "json"]].concat(), dir.path());
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meet.json")).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["command"], "meet");
    assert_eq!(doc["metadata"]["seed"], 4);
    assert_eq!(doc["meet"].as_array().unwrap().len(), 1);
    assert_eq!(doc["meet_summary"][0]["coupling"], "w2");
    assert!(!dir.path().join("meet.csv").exists());
}

#[test]
fn estimate_records_rule_and_schema() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "estimate", "--dim", "2", "--eps", "0.2", "--steps", "5", "--runs", "20",
            "--prelim-runs", "10", "--k-rule", "q90", "--m-mult", "10", "--reference-samples",
            "500", "--burn-in", "100", "--seed", "3",
        ],
        dir.path(),
    );
    let est = read_csv(&dir.path().join("estimate.csv"));
    assert_eq!(
        est.header,
        ["h", "estimate", "std_error", "variance", "inefficiency", "reference_variance"]
    );
    let names: Vec<&str> = est.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["x1", "x2", "x1^2", "x2^2"]);
    for r in &est.rows {
        for v in &r[1..] {
            assert!(v.parse::<f64>().unwrap().is_finite(), "{r:?}");
        }
    }
    let summary = read_csv(&dir.path().join("estimate_summary.csv"));
    let s = &summary.rows[0];
    assert_eq!(s[col(&summary, "k_rule")], "q90");
    assert_eq!(s[col(&summary, "m_mult")], "10");
    let k: usize = s[col(&summary, "k")].parse().unwrap();
    let m: usize = s[col(&summary, "m")].parse().unwrap();
    assert_eq!(m, 10 * k);
    let ri: f64 = s[col(&summary, "relative_inefficiency")].parse().unwrap();
    assert!(ri.is_finite() && ri > 0.0);
    let cfg = config_of(&summary);
    assert_eq!(cfg["k_rule"], "q90");
    assert_eq!(cfg["m_mult"], "10");
    assert_eq!(cfg["reference"]["samples"], 500);
}

#[test]
fn estimate_fixed_k_m_and_json() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "estimate", "--dim", "2", "--eps", "0.2", "--steps", "5", "--runs", "10",
            "--prelim-runs", "5", "--k", "3", "--m", "12", "--reference-samples", "0",
            "--format", "json",
        ],
        dir.path(),
    );
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    let s = &doc["estimate_summary"][0];
    assert_eq!(s["k"], 3);
    assert_eq!(s["m"], 12);
    assert_eq!(s["k_rule"], "fixed");
    // fixed k and m skip the preliminary runs
    assert!(doc["preliminary_taus"].as_array().unwrap().is_empty());
    assert_eq!(doc["metadata"]["config"]["reference"], Value::Null);
}

#[test]
fn estimate_lgcp_small_grid() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "estimate", "--target", "lgcp", "--dim", "64", "--eps", "0.3", "--steps", "10",
            "--runs", "8", "--prelim-runs", "8", "--max-iters", "300", "--reference-samples",
            "400", "--burn-in", "100", "--seed", "11",
        ],
        dir.path(),
    );
    let summary = read_csv(&dir.path().join("estimate_summary.csv"));
    let ri: f64 = summary.rows[0][col(&summary, "relative_inefficiency")].parse().unwrap();
    assert!(ri.is_finite() && ri > 0.0, "relative inefficiency {ri}");
    let est = read_csv(&dir.path().join("estimate.csv"));
    assert_eq!(est.rows.len(), 128);
}

#[test]
fn illustrate_csv_and_json() {
    let dir = TempDir::new().unwrap();
    ok(&["illustrate", "--samples", "2000"], dir.path());
    let joints = read_csv(&dir.path().join("illustrate.csv"));
    assert_eq!(joints.header, ["coupling", "i", "j", "analytic", "empirical"]);
    assert_eq!(joints.rows.len(), 2 * 8 * 8);
    for coupling in ["maximal", "w2"] {
        let total: f64 = joints
            .rows
            .iter()
            .filter(|r| r[0] == coupling)
            .map(|r| r[3].parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let summary = read_csv(&dir.path().join("illustrate_summary.csv"));
    assert_eq!(summary.rows.len(), 2);

    let jdir = TempDir::new().unwrap();
    ok(&["illustrate", "--samples", "2000", "--format", "json"], jdir.path());
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(jdir.path().join("illustrate.json")).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["command"], "illustrate");
    assert!(doc["result"]["w2"]["expected_distance"].as_f64().is_some());
}

#[test]
fn toys_small() {
    let dir = TempDir::new().unwrap();
    ok(&["toys", "gmm", "--runs", "3", "--max-iters", "20"], dir.path());
    let gmm = read_csv(&dir.path().join("toys_gmm.csv"));
    assert_eq!(gmm.header, ["method", "mode", "total_length", "i_tau"]);
    assert!(!gmm.rows.is_empty());
    for r in &gmm.rows {
        assert!(["eps", "L"].contains(&r[1].as_str()));
    }
    ok(&["toys", "banana", "--runs", "3", "--max-iters", "20"], dir.path());
    let banana = read_csv(&dir.path().join("toys_banana.csv"));
    assert_eq!(banana.header, ["method", "momentum", "mean_tau", "std_tau", "met", "runs"]);
    assert!(banana.rows.iter().all(|r| r[5] == "3"));
}

fn error_line(o: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn unknown_target_is_json_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["meet", "--target", "nope", "--runs", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = error_line(&o);
    assert!(e["error"]["message"].as_str().unwrap().contains("nope"));
    assert!(e["error"]["kind"].is_string());
}

#[test]
fn bad_flag_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["meet", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["kind"], "usage");

    let o = run(&["estimate", "--m-mult", "7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["kind"], "usage");
}

#[test]
fn zero_runs_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["meet", "--runs", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["error"]["kind"], "usage");
}

#[test]
fn missing_data_file_is_reported() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.txt");
    let o = run(
        &["meet", "--target", "logistic", "--data", missing.to_str().unwrap(), "--runs", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!error_line(&o)["error"]["message"].as_str().unwrap().is_empty());
}
