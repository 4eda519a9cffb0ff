use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn treeshrink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeshrink")).args(args).env_remove("TREESHRINK_WORKERS").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = treeshrink(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn node_count(path: &Path) -> usize {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    doc["nodes"].as_array().unwrap().len()
}

/// Generates the 259-node tree into `dir`.
fn generated(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("big.json");
    ok(&["gen", "--stages", "4", "--branching", "6", "--seed", "3", "-o", path_str(&path)]);
    path
}

fn stdout_number(out: &Output) -> f64 {
    String::from_utf8_lossy(&out.stdout).trim().parse().unwrap()
}

#[test]
fn gen_builds_the_requested_shape() {
    let dir = TempDir::new().unwrap();
    let big = generated(&dir);
    assert_eq!(node_count(&big), 259);
    assert!(dir.path().join("big.json.manifest.json").exists());

    let chain = dir.path().join("chain.json");
    ok(&["gen", "--stages", "5", "--branching", "1", "-o", path_str(&chain)]);
    assert_eq!(node_count(&chain), 5);
}

#[test]
fn gen_writes_to_stdout_without_an_output_path() {
    let out = ok(&["gen", "--stages", "2", "--branching", "3", "--range", "-1,1"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 4);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not a tree").unwrap();
    let out = treeshrink(&["reduce", "-i", path_str(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let missing = dir.path().join("missing.json");
    assert_eq!(treeshrink(&["nd", "-a", path_str(&missing), "-b", path_str(&missing)]).status.code(), Some(2));
    assert_eq!(treeshrink(&["gen", "--stages", "1"]).status.code(), Some(2));
    assert_eq!(treeshrink(&["gen", "--range", "5,1"]).status.code(), Some(2));
    assert_eq!(treeshrink(&["reduce", "--solver", "simplex", "-i", path_str(&broken)]).status.code(), Some(2));
    assert_eq!(treeshrink(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn a_tree_with_bad_probabilities_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    let text = r#"{"stages": 1, "d": 1, "nodes": [
        {"id": 0, "parent": null, "quantizer": [0.0], "prob": 1.0},
        {"id": 1, "parent": 0, "quantizer": [1.0], "prob": 0.7},
        {"id": 2, "parent": 0, "quantizer": [2.0], "prob": 0.7}]}"#;
    std::fs::write(&path, text).unwrap();
    assert_eq!(treeshrink(&["nd", "-a", path_str(&path), "-b", path_str(&path)]).status.code(), Some(2));
}

#[test]
fn reduce_writes_tree_trace_report_and_manifest() {
    let dir = TempDir::new().unwrap();
    let big = generated(&dir);
    let small = dir.path().join("small.json");
    let trace = dir.path().join("trace.csv");
    let report = dir.path().join("report.json");
    let out = ok(&[
        "reduce", "-i", path_str(&big), "--target-branching", "2", "--seed", "4",
        "--trace", path_str(&trace), "--report", path_str(&report), "-o", path_str(&small),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nd "));
    assert_eq!(node_count(&small), 15);

    let rows: Vec<String> = std::fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "iter,delta00,nd,seconds");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len() - 1, doc["delta_trace"].as_array().unwrap().len());
    let last_nd: f64 = rows.last().unwrap().split(',').nth(2).unwrap().parse().unwrap();

    // The reported distance is the exact one between the two trees.
    let nd = stdout_number(&ok(&["nd", "-a", path_str(&big), "-b", path_str(&small)]));
    assert!((nd - last_nd).abs() < 1e-6 * last_nd.max(1.0), "{nd} vs {last_nd}");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("small.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "reduce");
    assert_eq!(manifest["success"], true);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn auto_solver_logs_its_choice_per_stage() {
    let dir = TempDir::new().unwrap();
    let big = generated(&dir);
    let out = ok(&["reduce", "-i", path_str(&big), "--solver", "auto", "-o", path_str(&dir.path().join("r.json"))]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.lines().any(|l| l.starts_with("stage 0: ")), "{log}");
}

#[test]
fn running_out_of_iterations_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let big = generated(&dir);
    let out = treeshrink(&[
        "reduce", "-i", path_str(&big), "--max-iter", "1", "--tol", "1e-12", "-o", path_str(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("r.json").exists());
}

#[test]
fn nested_distance_is_symmetric() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&["gen", "--stages", "3", "--branching", "3", "--seed", "1", "-o", path_str(&a)]);
    ok(&["gen", "--stages", "3", "--branching", "2", "--seed", "2", "-o", path_str(&b)]);
    let ab = stdout_number(&ok(&["nd", "-a", path_str(&a), "-b", path_str(&b)]));
    let ba = stdout_number(&ok(&["nd", "-a", path_str(&b), "-b", path_str(&a)]));
    assert!(ab > 0.0 && (ab - ba).abs() < 1e-8 * ab);
    assert_eq!(stdout_number(&ok(&["nd", "-a", path_str(&a), "-b", path_str(&a)])), 0.0);
}

#[test]
fn worker_setting_does_not_change_the_output() {
    let dir = TempDir::new().unwrap();
    let big = generated(&dir);
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let result = Command::new(env!("CARGO_BIN_EXE_treeshrink"))
            .args(["reduce", "-i", path_str(&big), "-o", path_str(&out)])
            .env("TREESHRINK_WORKERS", workers)
            .output()
            .unwrap();
        assert!(result.status.success());
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("1", "one.json"), run("3", "three.json"));
}

#[test]
fn ingest_turns_scenarios_into_a_fan() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("paths.csv");
    std::fs::write(&csv, "prob,x0,x1,x2\n0.5,0,1,2\n0.25,0,1,3\n0.25,0,-1,0\n").unwrap();
    let fan = dir.path().join("fan.json");
    ok(&["ingest", "-i", path_str(&csv), "-o", path_str(&fan)]);
    assert_eq!(node_count(&fan), 1 + 3 + 3);
    let merged = dir.path().join("merged.json");
    ok(&["ingest", "-i", path_str(&csv), "--merge-stage", "1", "-o", path_str(&merged)]);
    assert_eq!(node_count(&merged), 1 + 2 + 3);
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bench.csv");
    ok(&["bench", "--n", "2,3", "--branch", "3,4", "--solvers", "lp,mam", "--iterations", "1", "-o", path_str(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "solver,n,branch,seconds,nd");
    assert_eq!(lines.len(), 1 + 8);
    assert!(dir.path().join("bench.csv.manifest.json").exists());
}
