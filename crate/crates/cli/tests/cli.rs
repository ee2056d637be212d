use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use std::f64::consts::PI;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resonance"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_in(dir: &Path, args: &[&str], config: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn spectrum_lists_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[domain]
modes = 3
[system]
m = 1
l = 1
lambda = [0.0]
sigma = [0.0]
[field]
name = "zero"
"#,
    );
    let out = run_in(dir.path(), &["spectrum"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "j,mu_j");
    assert_eq!(rows.len(), 4);
    for (j, row) in rows[1..].iter().enumerate() {
        let (idx, mu) = row.split_once(',').unwrap();
        assert_eq!(idx.parse::<usize>().unwrap(), j + 1);
        let expected = ((j + 1) as f64 * PI).powi(2);
        assert!((mu.parse::<f64>().unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn index_on_the_arctan_desk_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["index", "--json"], &configs().join("arctan-desk.toml"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let index = &report["index"];
    assert_eq!(index["h_K_infinity"], "Sphere(1)");
    assert_eq!(index["d0"], 2);
    assert_eq!(index["connection_predicted"], true);
    assert!(!dir.path().join("spectrum.csv").exists(), "--json alone writes no CSV");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("connection_predicted") && stdout.contains("true"));
}

#[test]
fn degree_hypothesis_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[domain]
modes = 8
[system]
m = 2
l = 1
lambda = ["mu1", "mu1"]
sigma = [1.0, 1.0]
[field]
name = "arctan"
"#,
    );
    let out = run_in(dir.path(), &["check"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("must be < 1"), "{err}");
    assert!(err.contains("stage setup"), "{err}");
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // the shift equals the largest retained eigenvalue
    let cfg = write_config(
        dir.path(),
        r#"
[domain]
modes = 4
[system]
m = 1
l = 1
lambda = ["mu4"]
sigma = [0.0]
[field]
name = "arctan"
"#,
    );
    let out = run_in(dir.path(), &["decompose"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage decompose"));

    let missing = dir.path().join("nope.toml");
    let out = run_in(dir.path(), &["spectrum"], &missing);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("mixed-blocks.toml");
    for dir in [&a, &b] {
        let out = run_in(dir.path(), &["simulate", "--s-grid", "0,1", "--seed", "5"], &cfg);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["config"]["run"]["s_grid"], serde_json::json!([0.0, 1.0]));
    assert!(a.path().join("margins.csv").exists());
    let trajectories = std::fs::read_dir(a.path().join("trajectories")).unwrap().count();
    assert_eq!(trajectories, 2 * 20);
}

#[test]
fn json_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("experiment.json");
    std::fs::write(
        &path,
        r#"{"system": {"m": 1, "l": 1, "lambda": ["mu2"], "sigma": [0.0]}, "field": {"name": "arctan"}}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["decompose", "--json"], &path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["decomposition"]["counts"]["d_inf"], 1);
    assert_eq!(report["conditions"]["skipped"], "not requested");
}
