use std::path::Path;
use std::process::{Command, Output};

use quadtrack::config::ConfigFile;
use quadtrack::metrics::{aggregate, compute_rmse, MetricsReport};
use quadtrack::sim::read_trace_csv;

fn quadtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadtrack"))
        .args(args)
        .current_dir(dir)
        .env("QUADTRACK_OUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn print_defaults_parses_back_to_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = quadtrack(dir.path(), &["print-defaults"]);
    assert!(out.status.success());
    let cfg = ConfigFile::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ConfigFile::default());
}

#[test]
fn simulate_default_lmpc_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "lmpc"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let csv = std::fs::read_to_string(dir.path().join("out/lmpc_trace.csv")).unwrap();
    // Header plus one row per grid point 0, 0.1, …, 40.
    assert_eq!(csv.lines().count(), 1 + 401);

    let json = std::fs::read_to_string(dir.path().join("out/lmpc_metrics.json")).unwrap();
    let metrics: MetricsReport = serde_json::from_str(&json).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
    for key in ["rmse_x", "rmse_y", "rmse_z", "rmse_phi", "rmse_theta", "rmse_psi", "rmse_xyz", "rmse_att"] {
        assert!(keys.iter().any(|k| k == key), "missing {key}");
    }

    // Re-parsing the 9-digit CSV reproduces the metrics.
    let trace = read_trace_csv(csv.as_bytes()).unwrap();
    let again = compute_rmse(&trace, 0.0).unwrap();
    for (a, b) in metrics.axes().iter().zip(again.axes()) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn identical_configs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":{"duration":5}}"#);
    let mut traces = Vec::new();
    for _ in 0..2 {
        let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "nmpc"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        traces.push(std::fs::read(dir.path().join("out/nmpc_trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn inverted_bounds_exit_1_naming_u_max() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"controllers":[{"kind":"lmpc","mpc":{"u_min":[0,0,0,0],"u_max":[10,10,-1,10]}}]}"#,
    );
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "lmpc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("u_max"), "{}", stderr(&out));
}

#[test]
fn zero_duration_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":{"duration":0}}"#);
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "lmpc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duration"));
}

#[test]
fn unknown_key_and_unknown_controller_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":{"dtt":0.1}}"#);
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "lmpc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("scenario.dtt"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "{}");
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "mpc2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mpc2"));
}

#[test]
fn controller_fault_exits_2_with_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    // An absurd thrust coefficient overflows the prediction matrices on the first solve.
    let cfg = write_config(dir.path(), r#"{"params":{"thrust_coeff":1e300},"controllers":[{"kind":"lmpc"}]}"#);
    let out = quadtrack(dir.path(), &["simulate", "--config", &cfg, "--controller", "lmpc"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("out/lmpc_trace.csv")).unwrap();
    assert!(csv.lines().count() < 402);
}

#[test]
fn compare_table_rows_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":{"duration":12},"output":{"plots":true}}"#);
    let out = quadtrack(dir.path(), &["compare", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let table = std::fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    let names: Vec<_> = rows.iter().map(|r| r[0].to_string()).collect();
    assert_eq!(names, ["pd", "smc", "bsc", "lmpc", "nmpc"]);
    for r in &rows {
        let v: Vec<f64> = (1..9).map(|i| r[i].parse().unwrap()).collect();
        assert_eq!(v.len(), 8);
        assert!((aggregate(v[0], v[1], v[2]) - v[3]).abs() <= 1e-12);
        assert!((aggregate(v[4], v[5], v[6]) - v[7]).abs() <= 1e-12);
        assert_eq!(&r[9], "ok");
    }
    assert!(std::fs::read_to_string(dir.path().join("out/compare.txt")).unwrap().contains("xyz (m)"));
    for svg in ["trajectory.svg", "errors.svg", "inputs.svg"] {
        let text = std::fs::read_to_string(dir.path().join("out").join(svg)).unwrap();
        assert!(text.starts_with("<svg"));
    }
}

#[test]
fn compare_without_plots_writes_no_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"scenario":{"duration":2},"controllers":[{"kind":"pd"},{"kind":"lmpc","name":"mpc"}],"output":{"plots":false}}"#,
    );
    let out = quadtrack(dir.path(), &["compare", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let svgs = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 0);
    assert!(dir.path().join("out/mpc_trace.csv").exists());
}

#[test]
fn output_directory_from_config_when_env_unset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":{"duration":1},"output":{"directory":"results"}}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_quadtrack"))
        .args(["simulate", "--config", &cfg, "--controller", "pd"])
        .current_dir(dir.path())
        .env_remove("QUADTRACK_OUT_DIR")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("results/pd_trace.csv").exists());
}
