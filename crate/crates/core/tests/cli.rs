use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgf_netcalc::scenario::ScenarioFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mgf-netcalc"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mgf-netcalc")
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn shipped_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let f = ScenarioFile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        f.to_tandem().unwrap();
        names.push(f.name);
    }
    names.sort();
    assert_eq!(
        names,
        ["fig2", "fig3", "fig4", "fig5", "oracle", "simcheck"]
    );
}

#[test]
fn analyze_prints_bounds() {
    let out = run(&["analyze", "--scenario", scenario("fig3").to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let det = v["deterministic_delay_ms"].as_f64().unwrap();
    assert!((det - 200.0 / 9.0).abs() < 1e-9);
    let prob = v["delay_ms"].as_f64().unwrap();
    assert!(prob > 0.0 && prob < det);
    assert!(v["delay_theta_star"].as_f64().unwrap() > 0.0);
    assert_eq!(v["delay_status"], "bounded");
}

#[test]
fn overrides_are_applied() {
    let path = scenario("fig3");
    let base = run(&["analyze", "--scenario", path.to_str().unwrap()]);
    let loose = run(&[
        "analyze",
        "--scenario",
        path.to_str().unwrap(),
        "--epsilon",
        "1e-2",
        "--slot-ms",
        "1",
        "--theta-grid",
        "1e-8:1e-3:32",
    ]);
    assert!(loose.status.success());
    let a: serde_json::Value = serde_json::from_slice(&base.stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&loose.stdout).unwrap();
    assert_eq!(b["epsilon"], 1e-2);
    assert_eq!(b["slot_ms"], 1.0);
    assert!(b["delay_ms"].as_f64().unwrap() < a["delay_ms"].as_f64().unwrap());
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "units": {"slot_ms": 0.1}}"#).unwrap();
    let out = run(&["analyze", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid scenario"));

    let out = run(&[
        "analyze",
        "--scenario",
        scenario("fig3").to_str().unwrap(),
        "--epsilon",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_experiment_block_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        scenario("fig3").to_str().unwrap(),
        "--experiment",
        "fig4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fig3_writes_auditable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        scenario("fig3").to_str().unwrap(),
        "--experiment",
        "fig3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = dir.path().join("fig3.csv");
    let cols = header(&csv);
    for c in ["theta_star", "tail_error"] {
        assert!(cols.iter().any(|h| h.contains(c)), "{cols:?}");
    }
    let rows = csv::Reader::from_path(&csv).unwrap().records().count();
    assert!(rows >= 7);
}

#[test]
fn unstable_points_exit_3_with_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        scenario("fig4").to_str().unwrap(),
        "--experiment",
        "fig4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let csv = dir.path().join("fig4.csv");
    assert!(header(&csv).iter().any(|h| h == "status"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.contains("inf"));
}

#[test]
fn trace_writes_per_slot_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let out = run(&[
        "trace",
        "--scenario",
        scenario("simcheck").to_str().unwrap(),
        "--slots",
        "500",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut r = csv::Reader::from_path(&path).unwrap();
    let hops: Vec<u32> = r
        .records()
        .map(|row| row.unwrap()[0].parse().unwrap())
        .collect();
    // one row per hop and slot
    assert_eq!(hops.len(), 2 * 500);
    assert_eq!(hops.iter().filter(|&&h| h == 1).count(), 500);
}

#[test]
fn unknown_experiment_is_rejected() {
    let out = run(&[
        "run",
        "--scenario",
        scenario("fig3").to_str().unwrap(),
        "--experiment",
        "fig9",
    ]);
    assert!(!out.status.success());
}
