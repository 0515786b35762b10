use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use littlemix_cli::{main_with_args, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, MANIFEST};
use serde_json::{json, Value};

const QUARTER_CHAIN: &str = r#"{
    "kind": "finite_chain",
    "transition": [[0.75, 0.25], [0.25, 0.75]],
    "atoms": [[0.0], [1.0]],
    "init": "stationary",
    "target_fn": [[0.0], [1.0]],
    "noise_std": 1.0
}"#;

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("littlemix").chain(args.iter().copied()))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn lds_sweep() -> Value {
    json!({
        "process_template": {"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]},
        "family": {"kind": "linear_ball", "B": 10.0, "d_x": 1, "d_y": 1},
        "T_grid": [16, 32, 64],
        "n_rep": 8,
        "n_eval": 20,
        "compute_m_t": false
    })
}

#[test]
fn diagnose_quarter_chain_writes_gamma_law() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({"process": serde_json::from_str::<Value>(QUARTER_CHAIN).unwrap(), "T": 12});
    let cfg_path = write_config(tmp.path(), "diag.json", &cfg);
    let out = tmp.path().join("out");
    assert_eq!(run(&["diagnose", "--config", &cfg_path, "--out", out.to_str().unwrap(), "--seed", "5"]), EXIT_OK);

    let text = fs::read_to_string(out.join("gamma.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,gamma"));
    let mut n = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (i, j): (i32, i32) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let g: f64 = f[2].parse().unwrap();
        assert!((g - 0.5f64.powf((j - i) as f64 / 2.0)).abs() <= 1e-12, "Γ[{i},{j}] = {g}");
        n += 1;
    }
    assert_eq!(n, 12 * 13 / 2);

    let manifest: Value = serde_json::from_slice(&fs::read(out.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "diagnose");
    assert_eq!(manifest["seeds"]["master_seed"], 5);
    assert_eq!(manifest["config"]["T"], 12);
    assert!(manifest["version"].is_string());
    let report: Value = serde_json::from_slice(&fs::read(out.join("diagnose.json")).unwrap()).unwrap();
    assert!((report["mu_min"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn missing_config_is_a_validation_error_with_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        run(&["simulate", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        EXIT_VALIDATION
    );
    assert!(!out.exists());
}

#[test]
fn invalid_configs_leave_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = [
        json!({"process": {"kind": "lds", "A_star": [[1.5]], "H": [[1.0]]}, "T": 10}),
        json!({"process": {"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]}, "T": 0}),
        json!({"process": {"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]}}),
        json!([1, 2, 3]),
    ];
    for (k, cfg) in bad.iter().enumerate() {
        let p = write_config(tmp.path(), &format!("bad{k}.json"), cfg);
        assert_eq!(run(&["simulate", "--config", &p, "--out", out.to_str().unwrap()]), EXIT_VALIDATION, "{cfg}");
        assert!(!out.exists());
    }
    let p = write_config(tmp.path(), "ok.json", &json!({"process": {"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]}, "T": 4}));
    assert_eq!(run(&["simulate", "--config", &p, "--out", out.to_str().unwrap(), "--threads", "0"]), EXIT_VALIDATION);
    assert!(!out.exists());
}

#[test]
fn unknown_command_and_help() {
    assert_eq!(run(&["frobnicate", "--config", "x", "--out", "y"]), EXIT_VALIDATION);
    assert_eq!(run(&[]), EXIT_VALIDATION);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn numeric_failures_exit_with_two() {
    // Noiseless chain with a realizable table: zero risk everywhere, so the
    // invariance ratio is undefined.
    let tmp = tempfile::tempdir().unwrap();
    let mut chain: Value = serde_json::from_str(QUARTER_CHAIN).unwrap();
    chain["noise_std"] = json!(0.0);
    let cfg = json!({
        "analysis": "mixing_sweep",
        "process_template": chain,
        "family": {"kind": "finite_table", "functions": [[[0.0], [1.0]], [[0.0], [0.0]]]},
        "T_grid": [8, 16],
        "n_rep": 2,
        "n_eval": 2
    });
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    assert_eq!(run(&["experiment", "--config", &p, "--out", out.to_str().unwrap(), "--seed", "4"]), EXIT_NUMERIC);
    assert!(!out.exists());
}

#[test]
fn rerun_from_manifest_is_bytewise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({"process": serde_json::from_str::<Value>(QUARTER_CHAIN).unwrap(), "T": 50, "n_traj": 3});
    let p = write_config(tmp.path(), "sim.json", &cfg);
    let first = tmp.path().join("first");
    // No seed anywhere: one is drawn and recorded.
    assert_eq!(run(&["simulate", "--config", &p, "--out", first.to_str().unwrap()]), EXIT_OK);
    let manifest: Value = serde_json::from_slice(&fs::read(first.join(MANIFEST)).unwrap()).unwrap();
    assert!(manifest["config"]["master_seed"].is_u64());
    let replay = write_config(tmp.path(), "replay.json", &manifest["config"]);
    let second = tmp.path().join("second");
    assert_eq!(run(&["simulate", "--config", &replay, "--out", second.to_str().unwrap()]), EXIT_OK);
    assert_eq!(read_dir_bytes(&first), read_dir_bytes(&second));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn experiment_outputs_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = lds_sweep();
    cfg["analysis"] = json!("mixing_sweep");
    cfg["param_role"] = json!("spectral_radius");
    cfg["param_grid"] = json!([0.0, 0.9]);
    let p = write_config(tmp.path(), "exp.json", &cfg);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("out{threads}"));
        assert_eq!(
            run(&["experiment", "--config", &p, "--out", out.to_str().unwrap(), "--seed", "21", "--threads", threads]),
            EXIT_OK
        );
        let mut files = read_dir_bytes(&out);
        let manifest: Value = serde_json::from_slice(&files.remove(MANIFEST).unwrap()).unwrap();
        assert_eq!(manifest["threads"].as_u64().unwrap().to_string(), threads);
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<&String> = outputs[0].keys().collect();
    assert_eq!(names, ["experiment.agg.csv", "experiment.csv", "experiment.recovery.csv", "mixing.json"]);
    let rows = String::from_utf8(outputs[0]["experiment.csv"].clone()).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 3 * 8);
}

#[test]
fn experiment_rejects_an_outputs_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = lds_sweep();
    let elsewhere = tmp.path().join("elsewhere.csv");
    cfg["outputs"] = json!(elsewhere);
    let p = write_config(tmp.path(), "exp.json", &cfg);
    let out = tmp.path().join("out");
    assert_eq!(run(&["experiment", "--config", &p, "--out", out.to_str().unwrap(), "--seed", "1"]), EXIT_VALIDATION);
    assert!(!out.exists() && !elsewhere.exists());
}

#[test]
fn fit_scores_the_estimator_and_writes_only_inside_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "process": {"kind": "lds", "A_star": [[0.5, 0.1], [0.0, 0.3]], "H": [[1.0, 0.0], [0.0, 1.0]]},
        "family": {"kind": "linear_ball", "B": 10.0, "d_x": 2, "d_y": 2},
        "T": 2000
    });
    let p = write_config(tmp.path(), "fit.json", &cfg);
    let before: Vec<_> = read_dir_bytes(tmp.path()).into_keys().collect();
    let out = tmp.path().join("out");
    assert_eq!(run(&["fit", "--config", &p, "--out", out.to_str().unwrap(), "--seed", "2"]), EXIT_OK);
    let mut after: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    after.sort();
    let mut expected = before.clone();
    expected.push("out".into());
    expected.sort();
    assert_eq!(after, expected);

    let report: Value = serde_json::from_slice(&fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["parameter_matrix"].as_array().unwrap().len(), 2);
    let risk = report["excess_risk"]["value"].as_f64().unwrap();
    // d_x d_y / T is the expected order.
    assert!(risk > 0.0 && risk < 20.0 * 4.0 / 2000.0, "risk {risk}");
    assert_eq!(report["excess_risk"]["method"], "exact_gramian");
    assert_eq!(fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count(), 2001);
}
