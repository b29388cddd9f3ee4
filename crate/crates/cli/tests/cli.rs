use std::path::Path;
use std::process::{Command, Output};

use otgrn_core::pipeline::PipelineConfig;

fn otgrn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otgrn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = otgrn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_the_seven_public_subcommands() {
    let text = String::from_utf8(ok(&["--help"]).stdout).unwrap();
    for cmd in [
        "simulate",
        "transport",
        "stitch",
        "eval-traj",
        "infer",
        "evaluate",
        "pipeline",
    ] {
        assert!(text.contains(cmd), "missing {cmd} in\n{text}");
    }
    assert!(!text.contains("gradcheck"));
    for cmd in [
        "simulate",
        "transport",
        "stitch",
        "eval-traj",
        "infer",
        "evaluate",
        "pipeline",
        "gradcheck",
    ] {
        ok(&[cmd, "--help"]);
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = otgrn(&["evaluate", "--edges", "a", "--truth", "b", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dry_run_prints_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"master_seed": 4, "nri": {"epochs": 3}}"#).unwrap();
    let out = ok(&[
        "pipeline",
        "--config",
        p(&cfg_path),
        "--n-seeds",
        "2",
        "--dry-run",
    ]);
    let printed: PipelineConfig = serde_json::from_slice(&out.stdout).unwrap();

    let mut expected = PipelineConfig::load(&cfg_path).unwrap();
    expected.n_seeds = 2;
    assert_eq!(printed, expected.resolve().unwrap());
    assert_eq!(printed.simulate.as_ref().unwrap().master_seed, 4);
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tempfile::tempdir().unwrap();
    let conflict = dir.path().join("conflict.json");
    std::fs::write(&conflict, r#"{"dataset": "d.json", "simulate": {}}"#).unwrap();
    let out = otgrn(&["pipeline", "--config", p(&conflict), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset") && err.contains("simulate"), "{err}");

    let missing = dir.path().join("nope.json");
    assert_eq!(
        otgrn(&["pipeline", "--config", p(&missing)]).status.code(),
        Some(4)
    );

    let out = Command::new(env!("CARGO_BIN_EXE_otgrn"))
        .args(["pipeline", "--dry-run"])
        .env("OTGRN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hidden_gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn stage_outputs_chain_without_editing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim_cfg = d.join("sim.json");
    std::fs::write(
        &sim_cfg,
        r#"{"n_cells": 40, "n_steps": 60, "retained_times": [0, 20, 40, 60]}"#,
    )
    .unwrap();
    let data = d.join("data");
    ok(&[
        "simulate",
        "--config",
        p(&sim_cfg),
        "--seed",
        "1",
        "--out",
        p(&data),
    ]);

    let plans = d.join("plans");
    ok(&[
        "transport",
        "--dataset",
        p(&data.join("test_manifest.json")),
        "--out",
        p(&plans),
    ]);
    let traj = d.join("traj.csv");
    ok(&[
        "stitch",
        "--plans",
        p(&plans.join("plans.json")),
        "--out",
        p(&traj),
    ]);

    let report = ok(&[
        "eval-traj",
        "--reconstructed",
        p(&traj),
        "--truth",
        p(&data.join("test_truth.csv")),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(report["per_transition"].as_array().unwrap().len(), 3);
    assert!(report["overall_mean"].as_f64().unwrap() >= 0.0);

    let edges = d.join("edges.csv");
    ok(&[
        "infer",
        "--trajectories",
        p(&traj),
        "--epochs",
        "2",
        "--hidden-dim",
        "8",
        "--batch-size",
        "8",
        "--out",
        p(&edges),
    ]);
    let metrics = d.join("metrics.json");
    ok(&[
        "evaluate",
        "--edges",
        p(&edges),
        "--truth",
        p(&data.join("truth_adjacency.csv")),
        "--out",
        p(&metrics),
    ]);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["n_genes"], 5);
    for key in ["auroc", "auprc", "epr"] {
        assert!(m[key].is_number(), "{key}");
    }
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim_cfg = d.join("sim.json");
    std::fs::write(
        &sim_cfg,
        r#"{"n_cells": 20, "n_steps": 20, "retained_times": [0, 10, 20]}"#,
    )
    .unwrap();
    ok(&[
        "simulate",
        "--config",
        p(&sim_cfg),
        "--out",
        p(&d.join("data")),
    ]);
    let nri_cfg = d.join("nri.json");
    std::fs::write(
        &nri_cfg,
        r#"{"hidden_dim": 4, "epochs": 2, "recon_variance": 1e-320}"#,
    )
    .unwrap();
    let out = otgrn(&[
        "infer",
        "--trajectories",
        p(&d.join("data/train_truth.csv")),
        "--config",
        p(&nri_cfg),
        "--out",
        p(&d.join("e.csv")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pipeline_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"simulate": {"n_cells": 40, "n_steps": 60, "retained_times": [0, 20, 40, 60]},
            "nri": {"hidden_dim": 8, "epochs": 2, "batch_size": 8},
            "n_seeds": 2, "null_repetitions": 5}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    ok(&["pipeline", "--config", p(&cfg), "--output-dir", p(&out_dir)]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["metrics"]["per_seed"].as_array().unwrap().len(), 2);
    assert!(summary["timings"]["infer"].is_number());
    assert!(out_dir.join("seed_01/edges.csv").exists());
}
