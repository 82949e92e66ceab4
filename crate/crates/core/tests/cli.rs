//! End-to-end runs of the `spline-noise` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spline_noise::cli::{Manifest, RunConfig, MANIFEST_FILE};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spline-noise"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, config: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn small_config() -> RunConfig {
    let mut config = RunConfig::standard(10);
    config.experiment.lambda_grid = vec![0.5, 1.0, 5.0];
    config.experiment.sigma_grid = vec![0.2, 0.6];
    config.experiment.trials = 40;
    config.plots.sigma_axis_lambdas = vec![1.0];
    config
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn default_config_writes_manifest_and_curve_families() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &RunConfig::standard(10));
    let out = dir.path().join("out");
    let output = run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let csvs = csv_files(&out);
    assert!(csvs.len() >= 5);
    for (name, bytes) in &csvs {
        let text = String::from_utf8(bytes.clone()).unwrap();
        let header = text.lines().next().unwrap();
        if name == "path.csv" {
            assert_eq!(header, "sigma,p3,p4");
        } else {
            assert_eq!(header, "axis,value,p1,p2");
        }
    }
    assert!(out.join("path.svg").exists());

    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.config, RunConfig::standard(10));
    assert_eq!(manifest.failed_trials, vec![0; 15]);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest.status, "ok");
    assert_eq!(
        manifest
            .files
            .iter()
            .filter(|f| f.path.ends_with(".csv"))
            .count(),
        csvs.len()
    );
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for (out, threads) in [(&first, "1"), (&second, "4")] {
        let status = run(&[
            "run",
            "--config",
            path_str(&config),
            "--out",
            path_str(out),
            "--threads",
            threads,
        ])
        .status;
        assert!(status.success());
    }
    assert_eq!(csv_files(&first), csv_files(&second));
}

#[test]
fn manifest_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert!(run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&first),
        "--seed",
        "99"
    ])
    .status
    .success());
    let manifest = first.join(MANIFEST_FILE);
    assert!(run(&[
        "run",
        "--config",
        path_str(&manifest),
        "--out",
        path_str(&second)
    ])
    .status
    .success());
    assert_eq!(csv_files(&first), csv_files(&second));

    let echoed: Manifest =
        serde_json::from_str(&fs::read_to_string(second.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(echoed.config.experiment.seed, 99);
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&a),
        "--seed",
        "1",
        "--no-svg"
    ])
    .status
    .success());
    assert!(run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&b),
        "--seed",
        "2",
        "--no-svg"
    ])
    .status
    .success());
    assert_ne!(csv_files(&a), csv_files(&b));
    assert!(!a.join("path.svg").exists());
}

#[test]
fn single_trial_gives_a_single_bernoulli_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.experiment.lambda_grid = vec![1.0];
    config.experiment.sigma_grid = vec![0.5];
    config.experiment.trials = 1;
    config.plots.sigma_axis = false;
    config.plots.path = false;
    let path = write_config(dir.path(), &config);
    let out = dir.path().join("out");
    assert!(
        run(&["run", "--config", path_str(&path), "--out", path_str(&out)])
            .status
            .success()
    );

    let csvs = csv_files(&out);
    assert_eq!(csvs.len(), 1);
    let text = String::from_utf8(csvs[0].1.clone()).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[0], "lambda");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0);
    for p in &fields[2..] {
        let p: f64 = p.parse().unwrap();
        assert!(p == 0.0 || p == 1.0);
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let mut value = serde_json::to_value(small_config()).unwrap();
    value["experiment"].as_object_mut().unwrap().remove("seed");
    let missing = dir.path().join("missing.json");
    fs::write(&missing, value.to_string()).unwrap();
    let output = run(&[
        "run",
        "--config",
        path_str(&missing),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("seed"));

    let mut config = small_config();
    config.experiment.sigma_grid = vec![0.0, 0.5];
    let degenerate = write_config(dir.path(), &config);
    assert_eq!(
        run(&[
            "run",
            "--config",
            path_str(&degenerate),
            "--out",
            path_str(&out)
        ])
        .status
        .code(),
        Some(1)
    );

    let nowhere = dir.path().join("absent.json");
    assert_eq!(
        run(&[
            "run",
            "--config",
            path_str(&nowhere),
            "--out",
            path_str(&out)
        ])
        .status
        .code(),
        Some(1)
    );

    let good = write_config(dir.path(), &small_config());
    let output = run(&[
        "run",
        "--config",
        path_str(&good),
        "--out",
        path_str(&out),
        "--threads",
        "0",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn oracle_checks_pass_and_create_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("checks");
    let output = run(&["check", "--out", path_str(&out)]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stdout)
    );
    let report = fs::read_to_string(out.join("oracle_checks.txt")).unwrap();
    assert!(!report.contains("FAIL"));
    assert!(report.contains("PASS penalty_quadrature"));
}

#[test]
fn injected_fault_fails_the_penalty_check() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&["check", "--out", path_str(dir.path()), "--inject-fault"]);
    assert_eq!(output.status.code(), Some(3));
    let report = fs::read_to_string(dir.path().join("oracle_checks.txt")).unwrap();
    assert!(report.contains("FAIL penalty_quadrature"));
    assert_eq!(report.matches("FAIL").count(), 1);
}

#[test]
fn init_config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg").join("standard.json");
    assert!(run(&["init-config", "--out", path_str(&path), "--n", "8"])
        .status
        .success());
    let config: RunConfig = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(config, RunConfig::standard(8));
}
