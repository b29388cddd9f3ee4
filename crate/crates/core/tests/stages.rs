use otgrn_core::datamodel::{
    load_dataset, load_trajectories_csv, save_dataset, save_trajectories_csv,
};
use otgrn_core::metrics::{evaluate, ppcor_baseline, shuffled_truth_null};
use otgrn_core::nri::{self, NriConfig};
use otgrn_core::simulate::{assemble_dataset, simulate_trajectories, SimulationConfig};
use otgrn_core::trajectory::{random_trajectories, reconstruction_error, stitch_trajectories};
use otgrn_core::transport::{transport_chain, TransportConfig};
use otgrn_core::{GrnDefinition, SplitTag, TrajectoryOrigin};

fn small_sim() -> SimulationConfig {
    SimulationConfig {
        n_cells: 60,
        n_steps: 200,
        retained_times: vec![0, 50, 100, 200],
        master_seed: 5,
        ..SimulationConfig::default()
    }
}

#[test]
fn stages_chain_through_files() {
    let grn = GrnDefinition::builtin("mcad-like").unwrap();
    let sim = small_sim();
    let data = assemble_dataset(&simulate_trajectories(&grn, &sim).unwrap(), &sim).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&data.train, &dir.path().join("train")).unwrap();
    let train = load_dataset(&manifest).unwrap();
    assert_eq!(train, data.train);

    let cfg = TransportConfig {
        marginal_penalty: otgrn_core::transport::MarginalPenalty::Finite(100.0),
        ..TransportConfig::default()
    };
    let plans: Vec<_> = transport_chain(&train, &cfg)
        .unwrap()
        .into_iter()
        .map(|s| s.plan)
        .collect();
    assert_eq!(plans.len(), 3);
    let stitched = stitch_trajectories(&train, &plans).unwrap();
    let traj_path = dir.path().join("traj.csv");
    save_trajectories_csv(&stitched, &traj_path).unwrap();
    let stitched = load_trajectories_csv(&traj_path, TrajectoryOrigin::Reconstructed).unwrap();

    let truth = data.aligned_truth(SplitTag::Train).unwrap();
    let ot_err = reconstruction_error(&stitched, &truth)
        .unwrap()
        .overall_mean();
    let random = random_trajectories(&train, 1).unwrap();
    let random_err = reconstruction_error(&random, &truth)
        .unwrap()
        .overall_mean();
    assert!(ot_err < random_err, "ot {ot_err} vs random {random_err}");

    let nri_cfg = NriConfig {
        hidden_dim: 8,
        epochs: 3,
        batch_size: 8,
        ..NriConfig::default()
    };
    let out = nri::train(&stitched, &nri_cfg).unwrap();
    assert_eq!(out.log.len(), 3);
    let adjacency = grn.adjacency_matrix();
    let report = evaluate(&out.probabilities, adjacency.view()).unwrap();
    for v in [report.auroc, report.auprc] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(report.epr >= 0.0);

    let null = shuffled_truth_null(&[out.probabilities], adjacency.view(), 50, 3).unwrap();
    assert!((null.mean - 0.5).abs() < 0.2);

    let ppcor = ppcor_baseline(&train).unwrap();
    let ppcor_report = evaluate(&ppcor.scores, adjacency.view()).unwrap();
    assert!((0.0..=1.0).contains(&ppcor_report.auroc));
}

#[test]
fn identical_seeds_give_identical_predictions() {
    let grn = GrnDefinition::builtin("mcad-like").unwrap();
    let sim = small_sim();
    let run = || {
        let data = assemble_dataset(&simulate_trajectories(&grn, &sim).unwrap(), &sim).unwrap();
        let plans: Vec<_> = transport_chain(&data.train, &TransportConfig::default())
            .unwrap()
            .into_iter()
            .map(|s| s.plan)
            .collect();
        let traj = stitch_trajectories(&data.train, &plans).unwrap();
        let cfg = NriConfig {
            hidden_dim: 8,
            epochs: 2,
            batch_size: 8,
            seed: 9,
            ..NriConfig::default()
        };
        nri::train(&traj, &cfg).unwrap().probabilities
    };
    assert_eq!(run(), run());
}
