use std::path::Path;
use std::process::{Command, Output};

use chaoskit::bsde::{quadratic_variation_terminal, AffineGenerator};
use chaoskit::{Atom, CellPartition, CellSet, DyadicMap, GridKernel, GroupSpec, LevyModel};
use serde_json::Value;

fn chaoskit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaoskit"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("CHAOSKIT_SEED")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn default_model() -> LevyModel {
    LevyModel::new(1.0, vec![Atom { x: 1.0, lambda: 1.0 }]).unwrap()
}

#[test]
fn suite_reports_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaoskit(dir.path(), &["suite"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path(), "suite");
    assert_eq!(r["schema"], "chaoskit/1");
    assert_eq!(r["result"]["criteria"].as_array().unwrap().len(), 10);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_model_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"model": {"sigma": 0.0, "atoms": []}}"#).unwrap();
    let out = chaoskit(dir.path(), &["--config", config.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = chaoskit(dir.path(), &["--level", "9", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic_and_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "11", "verify-diagram", "--paths", "100", "--level", "4"];
    assert_eq!(chaoskit(a.path(), &args).status.code(), Some(0));
    assert_eq!(chaoskit(b.path(), &args).status.code(), Some(0));
    let (mut ra, mut rb) = (report(a.path(), "verify-diagram"), report(b.path(), "verify-diagram"));
    ra["elapsed_secs"] = Value::Null;
    rb["elapsed_secs"] = Value::Null;
    assert_eq!(ra, rb);
    assert_eq!(ra["seed"], 11);
    assert_eq!(ra["result"]["residuals"].as_array().unwrap().len(), 100);

    let out = Command::new(env!("CARGO_BIN_EXE_chaoskit"))
        .args(["--out", a.path().to_str().unwrap(), "simulate", "--paths", "50"])
        .env("CHAOSKIT_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(a.path(), "simulate")["seed"], 42);
}

#[test]
fn simulate_dumps_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaoskit(dir.path(), &["--dump-paths", "simulate", "--paths", "5"]);
    assert_ne!(out.status.code(), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("paths/path_000004.csv")).unwrap();
    assert!(csv.starts_with("cell,gauss,count_1"));
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn project_reduce_and_transform_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = GridKernel::from_fn(2, 2, 2, |x| x.cells().map(|c| c as f64).sum::<f64>() + x.atoms().sum::<u32>() as f64)
        .unwrap();
    let kernel = write_json(d, "kernel.json", &f);
    let group = write_json(d, "group.json", &GroupSpec::full(2).unwrap());
    let partition = CellPartition::new(vec![CellSet::new(1, [0]).unwrap(), CellSet::new(1, [1]).unwrap()]).unwrap();
    let partition = write_json(d, "partition.json", &partition);
    let map = write_json(d, "map.json", &DyadicMap::periodic_shift(2).unwrap());

    assert_eq!(chaoskit(d, &["project", "--kernel", &kernel, "--group", &group]).status.code(), Some(0));
    assert_eq!(report(d, "project")["result"]["invariant"], true);

    assert_eq!(chaoskit(d, &["reduce", "--kernel", &kernel, "--partition", &partition]).status.code(), Some(0));
    assert!(report(d, "reduce")["result"]["residual"].as_f64().unwrap() > 0.0);

    let model = write_json(d, "model.json", &LevyModel::new(0.0, vec![Atom { x: 2.0, lambda: 1.0 }, Atom { x: -1.0, lambda: 0.5 }]).unwrap());
    let out = chaoskit(d, &["ns-transform", "--kernel", &kernel, "--model", &model, "--map", &map]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(d, "ns-transform");
    assert!(r["result"]["parseval_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["result"]["basis"]["norms_sq"].as_array().unwrap().len(), 2);
    assert!(r["result"]["transform"]["components"]["1,2"].is_array());

    let missing = chaoskit(d, &["project", "--kernel", &kernel]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn check_ergodic_fails_for_periodic_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let shifts = write_json(dir.path(), "shifts.json", &GroupSpec::periodic_shifts(3).unwrap());
    let out = chaoskit(dir.path(), &["check-ergodic", "--set", "0:0..1", "--group", &shifts, "--d-max", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(dir.path(), "check-ergodic")["result"]["passed"], false);
}

#[test]
fn bsde_runs_with_propagation_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let level = 3;
    let blocks = CellPartition::new(vec![CellSet::new(1, [0]).unwrap(), CellSet::new(1, [1]).unwrap()]).unwrap();
    let terminal = quadratic_variation_terminal(&blocks, &[1.0, 0.5], level, &default_model()).unwrap();
    let mut generator = AffineGenerator::linear(level, 0.5);
    generator.b = vec![vec![0.2; 8]];
    generator.drivers = vec![vec![1.0, -1.0]];
    let terminal = write_json(d, "terminal.json", &terminal);
    let generator = write_json(d, "generator.json", &generator);
    let partition = write_json(d, "partition.json", &blocks);
    let out = chaoskit(
        d,
        &["bsde", "--terminal", &terminal, "--generator", &generator, "--iters", "10", "--tol", "1e-9", "--partition", &partition],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(d, "bsde");
    assert_eq!(r["result"]["y"].as_array().unwrap().len(), 9);
    assert_eq!(r["result"]["propagation"]["passed"], true);
    assert_eq!(r["result"]["z"]["predictable"], true);
}

#[test]
fn config_blocks_supply_command_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"level": 2, "samples": 5000, "extract": {"functional": "increment", "n_max": 2}}"#).unwrap();
    let out = chaoskit(dir.path(), &["--config", config.to_str().unwrap(), "extract"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path(), "extract");
    assert_eq!(r["result"]["functional"], "increment");
    assert_eq!(r["result"]["chaos"]["kernels"].as_array().unwrap().len(), 2);
}
