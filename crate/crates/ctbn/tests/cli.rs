//! Integration tests of the binary surface: argument handling, exit
//! codes, and output determinism.

use ctbn::experiments::{generate_chain_network, ChainNetworkParams};
use ctbn::model::CtbnModel;
use ctbn::trajectory::Evidence;
use nalgebra::DMatrix;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctbn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("ctbn-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_valid_model(dir: &Path) -> PathBuf {
    let model = generate_chain_network(2, 3, &ChainNetworkParams::default(), 5).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    path
}

fn write_endpoint_evidence(dir: &Path, horizon: f64) -> PathBuf {
    let mut ev = Evidence::empty(2);
    ev.components[0].points = vec![(0.0, 0), (horizon, 1)];
    ev.components[1].points = vec![(0.0, 0), (horizon, 2)];
    let path = dir.join("evidence.json");
    std::fs::write(&path, ev.to_json()).unwrap();
    path
}

#[test]
fn validate_accepts_a_valid_model() {
    let dir = tmpdir("validate-ok");
    let model = write_valid_model(&dir);
    let out = run(&["validate", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_rejects_with_exit_code_2() {
    let dir = tmpdir("validate-bad");
    // negative off-diagonal rate
    let q = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
    let model = CtbnModel::from_parts(
        vec![2],
        vec![vec![]],
        vec![vec![q]],
        vec![vec![0.5, 0.5]],
    )
    .unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, model.to_json()).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violation"));
}

#[test]
fn missing_file_is_not_a_validation_failure() {
    let out = run(&["validate", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sample_writes_trajectories_and_is_seed_deterministic() {
    let dir = tmpdir("sample");
    let model = write_valid_model(&dir);
    let evidence = write_endpoint_evidence(&dir, 2.0);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "sample",
            model.to_str().unwrap(),
            evidence.to_str().unwrap(),
            "--t", "2.0",
            "--chains", "2",
            "--burnin", "10",
            "--samples", "3",
            "--thin", "1",
            "--seed", "7",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 3 + 1, "6 trajectories plus mean_stats.csv");
    assert!(names.contains(&"mean_stats.csv".to_string()));
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical-seed runs");
    }
    // trajectory CSV shape
    let sample = std::fs::read_to_string(out_a.join("chain000_sample0000.csv")).unwrap();
    let mut lines = sample.lines();
    assert!(lines.next().unwrap().starts_with("# T=2 seed=7"));
    assert_eq!(lines.next().unwrap(), "component,time,new_state");
}

#[test]
fn sample_zero_probability_evidence_exits_3() {
    let dir = tmpdir("sample-zero");
    // a component that can never leave state 0, pinned to end at 1
    let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
    let model = CtbnModel::from_parts(
        vec![2],
        vec![vec![]],
        vec![vec![q]],
        vec![vec![1.0, 0.0]],
    )
    .unwrap();
    let model_path = dir.join("model.json");
    std::fs::write(&model_path, model.to_json()).unwrap();
    let mut ev = Evidence::empty(1);
    ev.components[0].points = vec![(0.0, 0), (1.0, 1)];
    let ev_path = dir.join("evidence.json");
    std::fs::write(&ev_path, ev.to_json()).unwrap();
    let out = run(&[
        "sample",
        model_path.to_str().unwrap(),
        ev_path.to_str().unwrap(),
        "--t", "1.0",
        "--out", dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exact_writes_stats_csv() {
    let dir = tmpdir("exact");
    let model = write_valid_model(&dir);
    let evidence = write_endpoint_evidence(&dir, 2.0);
    let out_path = dir.join("stats.csv");
    let res = run(&[
        "exact",
        model.to_str().unwrap(),
        evidence.to_str().unwrap(),
        "--t", "2.0",
        "--grid", "400",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().next().unwrap().contains("component,parent_state_index,state_a"));
    // residence rows for both components exist
    assert!(text.lines().count() > 10);
}

#[test]
fn exact_rejects_interval_evidence() {
    let dir = tmpdir("exact-interval");
    let model = write_valid_model(&dir);
    let mut ev = Evidence::empty(2);
    ev.components[0].points = vec![(0.0, 0)];
    ev.components[1].points = vec![(0.0, 0)];
    ev.components[0].intervals = vec![(0.5, 1.0, 0)];
    let ev_path = dir.join("evidence.json");
    std::fs::write(&ev_path, ev.to_json()).unwrap();
    let out = run(&[
        "exact",
        model.to_str().unwrap(),
        ev_path.to_str().unwrap(),
        "--t", "2.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_runs_and_is_byte_deterministic() {
    let dir = tmpdir("experiment");
    let out_csv = dir.join("curve.csv");
    let config = format!(
        r#"{{"generator": {{"chain": {{"components": 2, "states": 2}}}},
            "horizon": 1.0, "chains": 2, "burnins": [5], "sample_counts": [5],
            "grid_n": 200, "seed": 3, "output": {:?}}}"#,
        out_csv.to_str().unwrap()
    );
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, config).unwrap();
    let res = run(&["experiment", "error-vs-samples", "--config", cfg_path.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let first = std::fs::read(&out_csv).unwrap();
    assert!(String::from_utf8_lossy(&first).contains("burnin,n_samples,error"));
    let res = run(&["experiment", "error-vs-samples", "--config", cfg_path.to_str().unwrap()]);
    assert!(res.status.success());
    assert_eq!(first, std::fs::read(&out_csv).unwrap());
}

#[test]
fn experiment_rejects_unknown_kind_and_bad_config() {
    let dir = tmpdir("experiment-bad");
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, r#"{"output": "x.csv"}"#).unwrap();
    let out = run(&["experiment", "nope", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&cfg_path, r#"{"output": "x.csv", "horizon": -3.0}"#).unwrap();
    let out = run(&["experiment", "timescale", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
