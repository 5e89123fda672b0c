//! End-to-end behaviour of the `rdd` binary and the command functions.

use std::fs;
use std::path::Path;
use std::process::Command;

use ndarray::array;
use rdd::cli::{
    cmd_curve, coupling_path, run_self_check, CheckInput, ExitStatus, Overrides, RunConfig,
    CSV_HEADER,
};

const BASE: &str = r#"{
  "source": {"family": "gaussian", "sigma": 2.0, "dim": 1, "h": 8.0, "K": 12},
  "y_space": {"dim": 1, "h": 8.0, "K": 12},
  "sweep": {"lambda_end": 0.05, "lambda_count": 6}
}"#;

fn rdd(dir: &Path, config: &str, args: &[&str]) -> std::process::Output {
    let path = dir.join("run.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rdd"))
        .args(&args[..1])
        .arg("--config")
        .arg(&path)
        .args(&args[1..])
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn curve_writes_one_row_per_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(
        dir.path(),
        BASE,
        &["curve", "--output", "curve.csv", "--jobs", "1"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    // 17 significant digits
    let lambda = rows[1].split(',').next().unwrap();
    assert_eq!(lambda, "1.0000000000000000e-2");
}

#[test]
fn serial_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["surface", "--theta", "0,0.5,1", "--jobs", "1"];
    let a = rdd(dir.path(), BASE, &args);
    let b = rdd(dir.path(), BASE, &args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 1 + 18);
}

#[test]
fn json_output_embeds_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(
        dir.path(),
        BASE,
        &[
            "curve",
            "--format",
            "json",
            "-o",
            "c.json",
            "--max-iter",
            "7",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["config"]["solver"]["max_iter"], 7);
    assert_eq!(doc["points"].as_array().unwrap().len(), 6);
    assert_eq!(doc["points"][0]["iterations"], 7);
}

#[test]
fn couplings_are_written_next_to_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(
        dir.path(),
        BASE,
        &["curve", "-o", "run.csv", "--emit-coupling", "--audit"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for i in 0..6 {
        let path = coupling_path(&dir.path().join("run.csv"), i);
        assert_eq!(
            path.file_name().unwrap().to_str().unwrap(),
            format!("run_coupling_{i}.csv")
        );
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 12);
    }
}

#[test]
fn fused_sweep_across_dimensions_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE
        .replace(r#""y_space": {"dim": 1"#, r#""y_space": {"dim": 2"#)
        .replace("\"K\": 12}", "\"K\": 3}");
    let out = rdd(dir.path(), &cfg, &["curve", "--theta", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
    // pure Gromov sweeps across dimensions are fine
    let out = rdd(dir.path(), &cfg, &["curve"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bad_configs_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(dir.path(), BASE, &["curve", "--theta", "1.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta_values"));

    let typo = BASE.replace("\"sigma\"", "\"sigam\"");
    let out = rdd(dir.path(), &typo, &["curve"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source.sigam"));

    let out = rdd(dir.path(), BASE, &["curve", "--lambda-count", "0"]);
    assert_eq!(out.status.code(), Some(1));

    let out = rdd(dir.path(), BASE, &["nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn multiplier_overflow_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(
        dir.path(),
        BASE,
        &["curve", "--lambda-end", "1e308", "--lambda-count", "3"],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.lines().nth(1).unwrap().contains("e0"));
    assert!(stdout.lines().last().unwrap().contains("NaN"));
}

#[test]
fn dmax_reports_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdd(dir.path(), BASE, &["dmax", "--restarts", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("D_max = "));
    assert_eq!(
        text.lines().filter(|l| l.starts_with("restart ")).count(),
        3
    );
}

#[test]
fn check_runs_the_oracle_on_small_instances() {
    let dir = tempfile::tempdir().unwrap();
    let small = BASE.replace("\"K\": 12", "\"K\": 10");
    let out = rdd(dir.path(), &small, &["check"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("decomposition oracle: 20 trials"));
    assert!(text.contains("Blahut-Arimoto"));

    let large = BASE.replace("\"K\": 12", "\"K\": 20");
    let out = rdd(dir.path(), &large, &["check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("decomposition oracle skipped"));
}

#[test]
fn corrupted_matrices_fail_validation() {
    let config = RunConfig::from_json_str(BASE).unwrap();
    let mut input = CheckInput::from_config(&config).unwrap();
    input.dx[[0, 3]] += 1.0;
    let mut report = Vec::new();
    assert_eq!(run_self_check(&input, &mut report), ExitStatus::ConfigError);
    assert!(String::from_utf8(report).unwrap().contains("dx"));

    let good = CheckInput {
        dx: array![[0.0, 1.0], [1.0, 0.0]],
        dy: array![[0.0, 2.0], [2.0, 0.0]],
        p: array![0.5, 0.5],
        d_cross: None,
        lambdas: vec![0.1],
        max_iter: 10,
        seed: 0,
    };
    assert_eq!(run_self_check(&good, &mut Vec::new()), ExitStatus::Success);
}

#[test]
fn flags_take_precedence_over_the_file() {
    let config = RunConfig::from_json_str(BASE).unwrap();
    let merged = Overrides {
        lambda_end: Some(0.2),
        theta_values: Some(vec![0.25]),
        seed: Some(9),
        ..Overrides::default()
    }
    .apply(config)
    .unwrap();
    let sweep = merged.sweep.as_ref().unwrap();
    assert_eq!(sweep.lambda_end, 0.2);
    assert_eq!(sweep.lambda_count, 6);
    assert_eq!(sweep.theta_values, vec![0.25]);
    assert_eq!(merged.solver.seed, 9);
    assert_eq!(merged.dmax.seed, 9);

    let mut stdout = Vec::new();
    assert_eq!(cmd_curve(&merged, &mut stdout), ExitStatus::Success);
    assert_eq!(String::from_utf8(stdout).unwrap().lines().count(), 7);
}

#[test]
fn circle_and_sphere_spaces_are_configurable() {
    let cfg = r#"{
      "source": {"shape": "circle", "n": 8, "radius": 4.0, "family": "uniform"},
      "y_space": {"shape": "sphere", "n": 3, "radius": 4.0},
      "sweep": {"lambda_end": 0.01, "lambda_count": 3}
    }"#;
    let config = RunConfig::from_json_str(cfg).unwrap();
    let mut out = Vec::new();
    assert_eq!(cmd_curve(&config, &mut out), ExitStatus::Success);

    let mixed = cfg.replace(r#""n": 8, "#, r#""n": 8, "K": 3, "#);
    let config = RunConfig::from_json_str(&mixed).unwrap();
    assert_eq!(cmd_curve(&config, &mut Vec::new()), ExitStatus::ConfigError);
}
