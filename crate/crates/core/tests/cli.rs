use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qbm::output::parse_csv;

fn qbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbm")).args(args).output().expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    parse_csv(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(table: &(Vec<String>, Vec<Vec<f64>>), name: &str) -> Vec<f64> {
    let j = table.0.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    table.1.iter().map(|r| r[j]).collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn default_scenario_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = qbm(&[
        "run",
        "--oracle",
        "--config",
        golden("default_n2.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("oracle-compare: PASS"));
    for (name, abs_floor) in [("coefficients", 0.0), ("trajectory", 0.0), ("comparison", 1e-9)] {
        let want = read(&golden(&format!("{name}.csv")));
        let got = read(&out_dir.join(format!("{name}.csv")));
        assert_eq!(want.0, got.0, "{name} headers");
        for (j, header) in want.0.iter().enumerate() {
            let scale = want.1.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            for row in &want.1 {
                let k = got.1.iter().position(|g| g[0] == row[0]).expect("golden time present");
                let (a, b) = (row[j], got.1[k][j]);
                assert!(
                    (a - b).abs() <= 1e-9 * scale + abs_floor,
                    "{name}.{header} at t = {}: {a} vs {b}",
                    row[0]
                );
            }
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "run");
    assert_eq!(manifest["n_scaling"], "com_reduced");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["summary"]["passed"], true);
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in ["kernels.csv", "coefficients.csv", "trajectory.csv", "comparison.csv"] {
        assert!(files.contains(&f), "{f} missing from manifest");
    }
}

#[test]
fn single_threaded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_osc": 3, "potential": {"kind": "chain", "kappa": 0.3}, "time": {"t_max": 3.0, "n_steps": 150},
            "oracle": {"n_modes": 100, "omega_max": 20}}"#,
    );
    let out_dir = dir.path().join("out");
    let files = ["kernels.csv", "coefficients.csv", "trajectory.csv", "comparison.csv", "manifest.json"];
    let mut runs = vec![];
    for _ in 0..2 {
        let out = qbm(&["run", "--oracle", "--threads", "1", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        runs.push(files.map(|f| fs::read(out_dir.join(f)).unwrap()));
    }
    for (f, (a, b)) in files.iter().zip(runs[0].iter().zip(&runs[1])) {
        assert!(a == b, "{f} differs between identical runs");
    }
}

#[test]
fn decoupled_bath_gives_zero_coefficients_and_unitary_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_osc": 2, "spectral": {"kind": "ohmic_family", "gamma": 0.0, "cutoff": 5},
            "initial": {"kind": "squeezed", "squeezing": [0.3, 0.0]}, "time": {"t_max": 3.0, "n_steps": 100}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = qbm(&["evolve", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--diag", "purity"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let coeffs = read(&out_dir.join("coefficients.csv"));
    for name in ["a", "b", "c", "d"] {
        assert!(column(&coeffs, name).iter().all(|&v| v == 0.0), "{name}");
    }
    let traj = read(&out_dir.join("trajectory.csv"));
    assert!(column(&traj, "nu_min").iter().all(|v| (v - 0.5).abs() < 1e-9));
    assert!(column(&traj, "purity").iter().all(|v| (v - 1.0).abs() < 1e-9));
    assert!(!traj.0.iter().any(|h| h == "U_1"), "--diag replaces the configured list");
}

#[test]
fn caustic_horizon_is_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_osc": 2, "spectral": {"kind": "ohmic_family", "gamma": 0.01, "cutoff": 5},
            "time": {"t_max": 4.0, "n_steps": 200}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = qbm(&["run", "--n-scaling", "as_printed", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("caustic"));
    let coeffs = read(&out_dir.join("coefficients.csv"));
    let flags = column(&coeffs, "caustic_flag");
    assert!(flags.iter().any(|&f| f == 1.0));
    assert_eq!(flags[0], 0.0);
    let a = column(&coeffs, "a");
    for (f, v) in flags.iter().zip(&a) {
        assert_eq!(*f == 1.0, v.is_nan());
    }
    assert!(!out_dir.join("trajectory.csv").exists());
}

#[test]
fn bad_configs_exit_with_code_two_and_a_path() {
    let dir = tempfile::tempdir().unwrap();
    for (text, path) in [
        (r#"{"n_osc": 2, "temperature": {"kind": "finite", "beta": -1}}"#, "temperature.beta"),
        (r#"{"n_osc": 2, "spectral": {"kind": "ohmic_family", "gamma": 0.1, "cutof": 5}}"#, "spectral"),
        (r#"{"n_osc": 2, "colour": 3}"#, "colour"),
    ] {
        let cfg = write_config(dir.path(), text);
        let out = qbm(&["coeffs", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(path), "{}", stderr(&out));
    }
    assert_eq!(qbm(&["coeffs"]).status.code(), Some(2));
    assert_ne!(qbm(&["coeffs", "--format", "xml"]).status.code(), Some(0));
}

#[test]
fn table_format_prints_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = qbm(&["transform", "--n-osc", "5", "--format", "table", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("eff_mass"));
    assert!(text.contains("8.000000e-1"));
    assert!(!out_dir.exists());
}

#[test]
fn transform_csv_lists_effective_masses() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("t");
    let out = qbm(&["transform", "--n-osc", "4", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let t = read(&out_dir.join("transform.csv"));
    assert_eq!(column(&t, "eff_mass"), vec![4.0, 1.0, 0.5, 0.5]);
    assert!(out_dir.join("manifest.json").exists());
    assert_eq!(qbm(&["transform"]).status.code(), Some(2));
}

#[test]
fn kernels_subcommand_writes_kernel_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n_osc": 1, "time": {"t_max": 2.0, "n_steps": 20}}"#);
    let out_dir = dir.path().join("k");
    let out = qbm(&["kernels", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let k = read(&out_dir.join("kernels.csv"));
    assert_eq!(k.0, vec!["s", "eta", "nu"]);
    assert_eq!(k.1.len(), 21);
    assert_eq!(k.1[0][1], 0.0);
}

#[test]
fn sweeps_expand_into_numbered_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_osc": 2, "time": {"t_max": 1.0, "n_steps": 20},
            "sweep": [{"parameter": "spectral.gamma", "values": [0.0, 0.05]},
                      {"parameter": "potential", "values": [{"kind": "none"}, {"kind": "chain", "kappa": 0.2}]}]}"#,
    );
    let out_dir = dir.path().join("sweep");
    let out = qbm(&["coeffs", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for i in 1..=4 {
        assert!(out_dir.join(format!("run{i:03}/coefficients.csv")).exists());
    }
    let zero = read(&out_dir.join("run001/coefficients.csv"));
    assert!(column(&zero, "b").iter().all(|&v| v == 0.0));
    let damped = read(&out_dir.join("run003/coefficients.csv"));
    assert!(column(&damped, "b").iter().any(|&v| v != 0.0));
}

#[test]
fn missed_oracle_tolerance_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_osc": 2, "time": {"t_max": 2.0, "n_steps": 100},
            "oracle": {"n_modes": 60, "omega_max": 20, "tolerance": 1e-12}}"#,
    );
    let out_dir = dir.path().join("o");
    let out = qbm(&["oracle-compare", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(out_dir.join("comparison.csv").exists());
}
