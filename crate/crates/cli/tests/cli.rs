//! End-to-end checks of the binary: exit codes, artifact shapes, and the
//! config round trip, on desk-scale configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levysheet"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levysheet_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{
                "seed": 11,
                "replicates": 2,
                "ecf_replicates": 100,
                "scan_replicates": 4,
                "gaussian_reference_replicates": 50,
                "epsilons": [0.25],
                "kernel_orders": [4],
                "heat": {{"nt": 16, "nx": 16, "green_terms": 8}},
                "quadrature": {{"kappa": 1.7, "min_cells": 16, "max_cells": 64}},
                "output_dir": "{}"
            }}"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_value_exits_2() {
    let out = bin().args(["approx-field", "--config"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_config_round_trips() {
    let out = bin().arg("default-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = levysheet_cli::ExperimentConfig::parse(&text).unwrap();
    assert_eq!(parsed, levysheet_cli::ExperimentConfig::default());
}

#[test]
fn validation_errors_exit_1_and_name_the_failure() {
    let dir = temp_dir("badcfg");
    let path = dir.join("bad.json");
    // Unit-jump Poisson at θ = π has a(2θ) = 0.
    fs::write(
        &path,
        r#"{"seed": 1, "model": {"type": "poisson", "rate": 1.0, "jump": 1.0}, "theta": 3.141592653589793}"#,
    )
    .unwrap();
    let out = bin()
        .args(["approx-field", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("a(2θ)") || stderr.contains("a(θ)·a(2θ)"), "{stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn approx_field_emits_one_row_per_replicate_and_point() {
    let dir = temp_dir("field");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["approx-field", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/field.csv")).unwrap();
    let mut lines = csv.lines();
    let provenance = lines.next().unwrap();
    assert!(provenance.starts_with("# seed=11 config="));
    assert_eq!(lines.next().unwrap(), "replicate,s,t,re,im");
    // 2 replicates x 3 default eval points.
    assert_eq!(lines.count(), 6);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn approx_field_with_single_point_and_two_replicates_has_two_rows() {
    let dir = temp_dir("field2");
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{"seed": 3, "replicates": 2, "epsilons": [0.25], "eval_points": [[1.0, 1.0]],
                "quadrature": {{"kappa": 1.7, "min_cells": 16, "max_cells": 64}},
                "output_dir": "{}"}}"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    let out = bin()
        .args(["approx-field", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/field.csv")).unwrap();
    assert_eq!(csv.lines().skip(2).count(), 2);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_sheet_dump_reads_back() {
    let dir = temp_dir("sheet");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["simulate-sheet", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(dir.join("out/sheet_eps0.25.bin")).unwrap();
    let (path, tag) = levysheet::SheetPath::read_dump(&mut bytes.as_slice()).unwrap();
    assert_eq!(tag, "brownian");
    assert_eq!(path.grid().x_max, 4.0);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn spde_run_and_compare_emit_reports() {
    let dir = temp_dir("spde");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["spde-run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/spde_marginals.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("noise,n,replicate,t,x,value"));
    // 2 replicates x 1 probe x (white + one kernel order).
    assert_eq!(csv.lines().skip(2).count(), 4);

    let out = bin()
        .args(["spde-compare", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/spde_compare.csv")).unwrap();
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("probe_t,probe_x,n,mean_ref,mean_approx"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn emit_plot_data_covers_the_epsilon_list() {
    let dir = temp_dir("plot");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["emit-plot-data", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/plot_data.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "epsilon,replicate,s,t,re,im");
    // 1 epsilon x 4 scan replicates x 3 default eval points.
    assert_eq!(csv.lines().skip(2).count(), 12);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_writes_an_auditable_report() {
    // Desk-scale statistics are far from their limits, so the exit code may
    // legitimately be 1; this checks the artifact contract, not the verdicts.
    let dir = temp_dir("verify");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["verify-convergence", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall:"), "{stdout}");
    let csv = fs::read_to_string(dir.join("out/report.csv")).unwrap();
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "test,target,estimate,stderr,tolerance,verdict"
    );
    assert!(csv.lines().skip(2).count() > 30);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_override_changes_the_artifacts() {
    let dir = temp_dir("seed");
    let cfg = tiny_config(&dir);
    let run = |seed: &str| -> String {
        let out = bin()
            .args([
                "approx-field",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                seed,
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read_to_string(dir.join("out/field.csv")).unwrap()
    };
    let a = run("5");
    let b = run("5");
    let c = run("6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    fs::remove_dir_all(&dir).unwrap();
}
