use super::*;
use crate::datamodel::load_edges_csv;

fn tiny(out: Option<PathBuf>) -> PipelineConfig {
    let json = r#"{
        "master_seed": 3,
        "simulate": {"n_cells": 40, "n_steps": 60, "retained_times": [0, 20, 40, 60]},
        "nri": {"hidden_dim": 8, "epochs": 2, "batch_size": 8},
        "n_seeds": 3,
        "null_repetitions": 10
    }"#;
    let mut cfg = PipelineConfig::from_json(json, None).unwrap();
    cfg.output_dir = out;
    cfg
}

#[test]
fn conflicting_dataset_and_simulate_is_rejected() {
    let err =
        PipelineConfig::from_json(r#"{"dataset": "x.json", "simulate": {}}"#, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("dataset") && msg.contains("simulate"), "{msg}");
    assert_eq!(err.kind(), crate::ErrorKind::Config);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(PipelineConfig::from_json(r#"{"n_seed": 3}"#, None).is_err());
    assert!(PipelineConfig::from_json(r#"{"nri": {"hidden": 3}}"#, None).is_err());
}

#[test]
fn resolution_fills_every_default() {
    let cfg = PipelineConfig::from_json("{}", None).unwrap();
    assert_eq!(cfg.n_seeds, 10);
    assert_eq!(cfg.network, "mcad-like");
    let sim = cfg.simulate.as_ref().unwrap();
    assert_eq!(sim, &SimulationConfig::default());
    assert_eq!(cfg.nri, NriConfig::default());

    let seeded = PipelineConfig::from_json(
        r#"{"master_seed": 11, "simulate": {"master_seed": 2}}"#,
        None,
    )
    .unwrap();
    assert_eq!(seeded.simulate.unwrap().master_seed, 11);
}

#[test]
fn relative_paths_resolve_against_the_config_directory() {
    let cfg = PipelineConfig::from_json(
        r#"{"dataset": "data/m.json", "network": "net.json"}"#,
        Some(Path::new("/cfg")),
    )
    .unwrap();
    assert_eq!(cfg.dataset.unwrap(), Path::new("/cfg/data/m.json"));
    assert_eq!(cfg.network, "/cfg/net.json");
    let builtin =
        PipelineConfig::from_json(r#"{"network": "vsc-like"}"#, Some(Path::new("/cfg"))).unwrap();
    assert_eq!(builtin.network, "vsc-like");
}

#[test]
fn run_seeds_are_distinct() {
    let cfg = PipelineConfig::default();
    let seeds: std::collections::BTreeSet<u64> = (0..10).map(|i| cfg.run_seed(i)).collect();
    assert_eq!(seeds.len(), 10);
}

#[test]
fn aggregate_matches_hand_computation() {
    let r = |auroc, auprc, epr| MetricsReport {
        auroc,
        auprc,
        epr,
        n_genes: 5,
        k_edges: 6,
    };
    let agg = Aggregate::from_reports(&[r(0.5, 0.2, 1.0), r(0.7, 0.4, 2.0)]).unwrap();
    assert!((agg.auroc_mean - 0.6).abs() < 1e-15);
    assert!((agg.auroc_std - 0.1).abs() < 1e-15);
    assert!((agg.auprc_std - 0.1).abs() < 1e-15);
    assert_eq!(agg.epr_mean, 1.5);
    assert_eq!(agg.epr_std, 0.5);
    assert!(Aggregate::from_reports(&[]).is_err());
}

#[test]
fn end_to_end_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&tiny(Some(dir.path().to_path_buf()))).unwrap();
    let m = &out.summary.metrics;
    assert_eq!(m.per_seed.len(), 3);
    assert!(m.reconstruction.as_ref().unwrap().ot.is_some());
    for stage in [
        "simulate",
        "transport",
        "stitch",
        "eval_traj",
        "infer",
        "evaluate",
    ] {
        assert!(out.summary.timings.contains_key(stage), "{stage}");
    }

    let names = crate::GrnDefinition::builtin("mcad-like")
        .unwrap()
        .gene_names()
        .to_vec();
    let truth = truth_adjacency("mcad-like").unwrap();
    let mut aurocs = Vec::new();
    for i in 0..3 {
        let seed_dir = dir.path().join(format!("seed_{i:02}"));
        let edges = load_edges_csv(&seed_dir.join("edges.csv"), &names).unwrap();
        let rescored = metrics::evaluate(&edges, truth.view()).unwrap();
        let text = std::fs::read_to_string(seed_dir.join("metrics.json")).unwrap();
        let stored: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(rescored, stored);
        aurocs.push(stored.auroc);
    }
    let mean = aurocs.iter().sum::<f64>() / 3.0;
    let std = (aurocs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((m.aggregate.auroc_mean - mean).abs() < 1e-12);
    assert!((m.aggregate.auroc_std - std).abs() < 1e-12);

    for f in [
        "summary.json",
        "metrics_summary.json",
        "resolved_config.json",
        "trajectories.csv",
        "ppcor_edges.csv",
        "truth_adjacency.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["master_seed"], 3);
    assert!(summary["metrics"]["aggregate"]["auroc_mean"].is_number());
}

#[test]
fn identical_runs_give_identical_metric_summaries() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&tiny(Some(a.path().to_path_buf()))).unwrap();
    run(&tiny(Some(b.path().to_path_buf()))).unwrap();
    let read = |d: &Path| std::fs::read(d.join("metrics_summary.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn failing_stage_is_named_and_keeps_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Some(dir.path().to_path_buf()));
    cfg.nri.recon_variance = 1e-320;
    let err = run(&cfg).unwrap_err();
    assert!(err.to_string().contains("stage `infer`"), "{err}");
    assert_eq!(err.kind(), crate::ErrorKind::Numeric);
    assert!(dir.path().join("trajectories.csv").exists());
}

#[test]
fn dataset_mode_skips_reconstruction_and_checks_genes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = tiny(None).simulate.unwrap();
    let grn = crate::GrnDefinition::builtin("mcad-like").unwrap();
    let data = assemble_dataset(&simulate_trajectories(&grn, &sim).unwrap(), &sim).unwrap();
    let manifest = crate::datamodel::save_dataset(&data.train, dir.path()).unwrap();

    let mut cfg = tiny(None);
    cfg.simulate = None;
    cfg.dataset = Some(manifest.clone());
    cfg.n_seeds = 1;
    let out = run(&cfg).unwrap();
    assert!(out.summary.metrics.reconstruction.is_none());

    cfg.network = "vsc-like".into();
    assert!(run(&cfg).is_err());
}
