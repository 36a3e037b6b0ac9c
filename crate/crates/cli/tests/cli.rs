use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cascadesim_core::store::{read_csv, Query, Store, EXTENSION};

fn fixture(name: &str, file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).join(file)
}

fn cascadesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascadesim"))
        .args(args)
        .env("CASCADESIM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn partitions(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap()))
        .collect()
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let config = fixture("minimal", "config.json");
    let mut args = vec!["simulate", "--config", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cascadesim(&args)
}

#[test]
fn simulate_solves_fifty_problems_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--seed", "7", "--workers", "4", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let chains = summary["chains"].as_array().unwrap();
    assert_eq!(chains.len(), 3);
    for c in chains {
        let p = &c["problems"];
        let total: u64 = ["week_ahead", "day_ahead", "hour_ahead", "true_up"].iter().map(|k| p[k].as_u64().unwrap()).sum();
        assert_eq!(total, 50);
    }
    assert_eq!(partitions(dir.path()).len(), 3);
    let stamp: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stamp.json")).unwrap()).unwrap();
    assert_eq!(stamp["seed"], 7);
    assert_eq!(stamp["flags"]["workers"], 4);
}

#[test]
fn stamped_config_reproduces_the_store() {
    let a = tempfile::tempdir().unwrap();
    let out = simulate(a.path(), &["--scenarios", "2", "--set", "sddp.max_iterations=3"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stamp: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("stamp.json")).unwrap()).unwrap();
    assert_eq!(stamp["effective"]["sddp"]["max_iterations"], 3);
    let b = tempfile::tempdir().unwrap();
    let mut cfg = stamp["effective"].clone();
    cfg["output_dir"] = serde_json::json!(b.path());
    let cfg_path = b.path().join("rerun.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = cascadesim(&["simulate", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(partitions(a.path()), partitions(b.path()));
}

#[test]
fn cyclic_cascade_fails_validation() {
    let sys = fixture("cyclic", "system.json");
    let out = cascadesim(&["validate", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("cycle"), "{}", text(&out.stderr));
}

#[test]
fn fixture_configs_validate() {
    for name in ["minimal", "desk"] {
        let cfg = fixture(name, "config.json");
        let out = cascadesim(&["validate", "--config", cfg.to_str().unwrap(), "--json"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", text(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["status"], "ok");
    }
}

#[test]
fn bad_input_exits_with_one() {
    let cfg = fixture("minimal", "config.json");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(cascadesim(&["simulate", "--config", cfg, "--bogus"]).status.code(), Some(1));
    assert_eq!(cascadesim(&["simulate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = cascadesim(&["simulate", "--config", cfg, "--set", "start_hour=5", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("start_hour"), "{}", text(&out.stderr));
    assert_eq!(cascadesim(&["query", "--output-dir", "/nonexistent/store"]).status.code(), Some(1));
}

#[test]
fn six_day_hydro_chart_has_four_layers() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--scenarios", "1", "--hours", "144"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let svg = dir.path().join("hydro.svg");
    let out = cascadesim(&[
        "query",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--metric",
        "hydro_generation",
        "--layers",
        "all",
        "--export",
        "svg",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let chart = fs::read_to_string(&svg).unwrap();
    assert!(chart.starts_with("<svg"));
    assert_eq!(chart.matches("<polyline").count(), 4);
    for layer in ["week_ahead", "day_ahead", "hour_ahead", "true_up"] {
        assert!(chart.contains(layer), "{layer} missing from legend");
    }
}

#[test]
fn exported_csv_matches_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--scenarios", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let out = cascadesim(&["export", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let back = read_csv(out.stdout.as_slice()).unwrap();
    let stored = Store::open(dir.path()).unwrap().query(&Query::default()).unwrap();
    assert!(!stored.is_empty());
    assert_eq!(back, stored);

    let out = cascadesim(&[
        "query",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--metric",
        "thermal_generation",
        "--layers",
        "true_up",
        "--hours",
        "0..6",
        "--agg",
        "sum",
    ]);
    let lines: Vec<String> = text(&out.stdout).lines().map(String::from).collect();
    assert_eq!(lines[0], "layer,hour,value");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("true_up,0,"));
}
