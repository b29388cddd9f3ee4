use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rand::Rng;

use otgrn_core::autodiff::Tape;
use otgrn_core::nri::{self, Mode, NriConfig, NriModel};
use otgrn_core::rng;
use otgrn_core::simulate::{assemble_dataset, simulate_trajectories, SimulationConfig};
use otgrn_core::trajectory::stitch_trajectories;
use otgrn_core::transport::{
    solve_entropic_ot, transport_chain, CostMatrix, EpsilonSpec, Stabilization, TransportConfig,
};
use otgrn_core::{GrnDefinition, SplitTag};

fn random_cost(n: usize, seed: u64) -> CostMatrix {
    let mut r = rng::stream(seed, 0);
    CostMatrix::new(Array2::from_shape_fn((n, n), |_| r.random::<f64>())).unwrap()
}

fn sinkhorn(c: &mut Criterion) {
    let cost = random_cost(200, 1);
    for (name, stab, eps) in [
        (
            "sinkhorn_direct_200",
            Stabilization::Direct,
            EpsilonSpec::Relative(0.05),
        ),
        (
            "sinkhorn_log_200",
            Stabilization::Log,
            EpsilonSpec::Relative(0.005),
        ),
    ] {
        let cfg = TransportConfig {
            epsilon: eps,
            stabilization: stab,
            ..TransportConfig::default()
        };
        c.bench_function(name, |b| {
            b.iter(|| solve_entropic_ot(black_box(&cost), &cfg).unwrap())
        });
    }
}

fn small_dataset() -> otgrn_core::SnapshotDataset {
    let grn = GrnDefinition::builtin("mcad-like").unwrap();
    let cfg = SimulationConfig {
        n_cells: 400,
        ..SimulationConfig::default()
    };
    let traj = simulate_trajectories(&grn, &cfg).unwrap();
    assemble_dataset(&traj, &cfg).unwrap().test
}

fn stitching(c: &mut Criterion) {
    let ds = small_dataset();
    let plans: Vec<_> = transport_chain(&ds, &TransportConfig::default())
        .unwrap()
        .into_iter()
        .map(|s| s.plan)
        .collect();
    c.bench_function("stitch_argmax_100_cells", |b| {
        b.iter(|| stitch_trajectories(black_box(&ds), &plans).unwrap())
    });
}

fn nri_step(c: &mut Criterion) {
    let grn = GrnDefinition::builtin("mcad-like").unwrap();
    let sim = SimulationConfig {
        n_cells: 64,
        ..SimulationConfig::default()
    };
    let data = assemble_dataset(&simulate_trajectories(&grn, &sim).unwrap(), &sim).unwrap();
    let traj = data.aligned_truth(SplitTag::Train).unwrap();
    let cfg = NriConfig {
        hidden_dim: 32,
        ..NriConfig::default()
    };
    let model =
        NriModel::new(&cfg, traj.n_genes(), traj.n_times(), &mut rng::stream(0, 0)).unwrap();
    let samples: Vec<usize> = (0..16).collect();
    c.bench_function("nri_forward_backward_batch16", |b| {
        b.iter(|| {
            let tape = Tape::new();
            let parts = nri::forward_loss(
                &tape,
                &model,
                &traj,
                &samples,
                0.5,
                None,
                &mut Mode::Eval,
                &cfg,
            )
            .unwrap();
            tape.backward(parts.total).unwrap()
        })
    });
}

criterion_group!(benches, sinkhorn, stitching, nri_step);
criterion_main!(benches);
