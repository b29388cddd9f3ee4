//! Stochastic stand-in for a boolean-ODE single-cell simulator.
//!
//! Each gene follows Hill-type production with linear decay,
//! `dx_r = (m_r f_r(x) - decay_r x_r) dt + sigma sqrt(dt) xi`, integrated with
//! Euler–Maruyama and clamped at zero. `f_r` merges the Hill terms of the
//! regulators of `r` with `min` (AND) or `max` (OR); a gene without regulators
//! is constitutively produced (`f_r = 1`).
//!
//! The noise magnitude and the initial-state distribution are stand-in
//! defaults; nothing about them is calibrated against a real simulator.

use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    Combination, ExpressionMatrix, GrnDefinition, Sign, SnapshotDataset, SplitTag,
    TrajectoryOrigin, TrajectorySet,
};
use crate::error::{invalid, numeric, shape_err, Result};
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_cells: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub noise_sigma: f64,
    /// Step indices kept as snapshots.
    pub retained_times: Vec<usize>,
    pub train_fraction: f64,
    pub master_seed: u64,
    /// Fixed initial state shared by all cells; `None` draws each gene uniformly in `[0, 1]`.
    pub initial_state: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_cells: 800,
            n_steps: 1000,
            dt: 0.01,
            noise_sigma: 0.05,
            retained_times: vec![0, 50, 100, 400, 600, 650, 1000],
            train_fraction: 0.75,
            master_seed: 0,
            initial_state: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid!("dt must be positive, got {}", self.dt));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.n_cells == 0 {
            return Err(invalid!("n_cells must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.retained_times.len() < 2 {
            return Err(invalid!(
                "k >= 2 retained time points required, got {}",
                self.retained_times.len()
            ));
        }
        if self.retained_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid!("retained_times must be strictly increasing"));
        }
        if self.retained_times.iter().any(|&t| t > self.n_steps) {
            return Err(invalid!("retained time beyond n_steps = {}", self.n_steps));
        }
        Ok(())
    }

    /// Number of cells assigned to the train split (floor rule, remainder to test).
    pub fn n_train(&self) -> usize {
        (self.n_cells as f64 * self.train_fraction).floor() as usize
    }
}

/// Hill activation `x^n / (K^n + x^n)` or repression `K^n / (K^n + x^n)`.
pub fn hill_term(x: f64, half_saturation: f64, n: f64, mode: Sign) -> f64 {
    let xn = x.max(0.0).powf(n);
    let kn = half_saturation.powf(n);
    let denom = kn + xn;
    match mode {
        Sign::Activate => xn / denom,
        Sign::Inhibit => kn / denom,
    }
}

/// Production drive `f_r` of gene `r` given the current state.
fn regulation(grn: &GrnDefinition, r: usize, state: &[f64]) -> f64 {
    let k = &grn.kinetics()[r];
    let terms = k
        .activators
        .iter()
        .map(|&s| hill_term(state[s], k.half_saturation, k.hill_n, Sign::Activate))
        .chain(
            k.inhibitors
                .iter()
                .map(|&s| hill_term(state[s], k.half_saturation, k.hill_n, Sign::Inhibit)),
        );
    match k.combination {
        Combination::And => terms.fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |a| a.min(t)))
        }),
        Combination::Or => terms.fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |a| a.max(t)))
        }),
    }
    .unwrap_or(1.0)
}

/// Deterministic part of the drift for every gene.
pub fn drift(grn: &GrnDefinition, state: &[f64], out: &mut [f64]) {
    for (r, k) in grn.kinetics().iter().enumerate() {
        out[r] = k.max_rate * regulation(grn, r, state) - k.decay * state[r];
    }
}

/// Full-resolution ground-truth trajectories, `n_cells × (n_steps + 1) × g`.
pub fn simulate_trajectories(grn: &GrnDefinition, cfg: &SimulationConfig) -> Result<TrajectorySet> {
    cfg.validate()?;
    let g = grn.n_genes();
    if let Some(x0) = &cfg.initial_state {
        if x0.len() != g || x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid!(
                "initial_state must hold {g} finite nonnegative values"
            ));
        }
    }
    let k = cfg.n_steps + 1;
    let seed = rng::derive_seed(cfg.master_seed, &[tags::SIMULATE]);
    let sqrt_dt = cfg.dt.sqrt();

    let cells: Vec<Result<Array2<f64>>> = (0..cfg.n_cells)
        .into_par_iter()
        .map(|cell| {
            let mut rng = rng::stream(seed, cell as u64);
            let mut path = Array2::zeros((k, g));
            let mut x: Vec<f64> = match &cfg.initial_state {
                Some(x0) => x0.clone(),
                None => (0..g).map(|_| rng.random::<f64>()).collect(),
            };
            let mut dx = vec![0.0; g];
            path.row_mut(0).assign(&ndarray::ArrayView1::from(&x));
            for step in 1..k {
                drift(grn, &x, &mut dx);
                for r in 0..g {
                    let xi: f64 = if cfg.noise_sigma > 0.0 {
                        rng.sample(StandardNormal)
                    } else {
                        0.0
                    };
                    let next = x[r] + dx[r] * cfg.dt + cfg.noise_sigma * sqrt_dt * xi;
                    if !next.is_finite() {
                        return Err(numeric!(
                            "non-finite state for cell {cell}, gene {r} at step {step}; dt may be unstable"
                        ));
                    }
                    x[r] = next.max(0.0);
                }
                path.row_mut(step).assign(&ndarray::ArrayView1::from(&x));
            }
            Ok(path)
        })
        .collect();

    let mut values = Array3::zeros((cfg.n_cells, k, g));
    for (p, path) in cells.into_iter().enumerate() {
        values.index_axis_mut(Axis(0), p).assign(&path?);
    }
    let timestamps = (0..k).map(|i| i as f64 * cfg.dt).collect();
    TrajectorySet::new(
        values,
        timestamps,
        grn.gene_names().to_vec(),
        TrajectoryOrigin::GroundTruth,
    )
}

/// Output of [`assemble_dataset`].
#[derive(Debug, Clone)]
pub struct AssembledData {
    pub train: SnapshotDataset,
    pub test: SnapshotDataset,
    /// Unshuffled truth at the retained times, all cells in simulation order.
    pub truth: TrajectorySet,
    /// Simulation cell indices in each split, in the order drawn.
    pub train_cells: Vec<usize>,
    pub test_cells: Vec<usize>,
    /// `train_columns[i][j]` is the simulation cell shown in column `j` of train snapshot `i`.
    pub train_columns: Vec<Vec<usize>>,
    pub test_columns: Vec<Vec<usize>>,
}

impl AssembledData {
    /// Truth trajectories for one split, ordered like the columns of its first snapshot,
    /// i.e. trajectory `p` is the true history of the cell a stitcher roots at column `p`.
    pub fn aligned_truth(&self, split: SplitTag) -> Result<TrajectorySet> {
        let columns = match split {
            SplitTag::Train => &self.train_columns,
            SplitTag::Test => &self.test_columns,
            SplitTag::All => return Err(invalid!("aligned truth needs the train or test split")),
        };
        self.truth.select(&columns[0])
    }
}

/// Subsamples retained times, splits cells into train/test, and shuffles cell
/// order independently inside every snapshot.
pub fn assemble_dataset(traj: &TrajectorySet, cfg: &SimulationConfig) -> Result<AssembledData> {
    if cfg.retained_times.len() < 2 {
        return Err(invalid!("k >= 2 retained time points required"));
    }
    if cfg.retained_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid!("retained_times must be strictly increasing"));
    }
    if let Some(&bad) = cfg.retained_times.iter().find(|&&t| t >= traj.n_times()) {
        return Err(shape_err!(
            "retained time {bad} outside trajectories of length {}",
            traj.n_times()
        ));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(invalid!("train_fraction must lie in (0, 1)"));
    }
    let n = traj.n_trajectories();
    let n_train = (n as f64 * cfg.train_fraction).floor() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(invalid!(
            "fewer than 2 cells in a split ({n_train} train / {} test)",
            n - n_train
        ));
    }

    let sub = traj.values().select(Axis(1), &cfg.retained_times);
    let times: Vec<f64> = cfg
        .retained_times
        .iter()
        .map(|&i| traj.timestamps()[i])
        .collect();
    let truth = TrajectorySet::new(
        sub,
        times.clone(),
        traj.gene_names().to_vec(),
        TrajectoryOrigin::GroundTruth,
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.master_seed, tags::SPLIT));
    let train_cells = order[..n_train].to_vec();
    let test_cells = order[n_train..].to_vec();

    let shuffle_seed = rng::derive_seed(cfg.master_seed, &[tags::SHUFFLE]);
    let build = |cells: &[usize],
                 split: SplitTag,
                 split_id: u64|
     -> Result<(SnapshotDataset, Vec<Vec<usize>>)> {
        let mut snapshots = Vec::with_capacity(times.len());
        let mut columns = Vec::with_capacity(times.len());
        for (i, &t) in times.iter().enumerate() {
            let mut cols = cells.to_vec();
            let mut rng = rng::stream(shuffle_seed, (i as u64) << 1 | split_id);
            cols.shuffle(&mut rng);
            let values = truth
                .values()
                .slice(s![.., i, ..])
                .select(Axis(0), &cols)
                .reversed_axes();
            let ids = (0..cols.len()).map(|j| format!("t{i}_c{j}")).collect();
            snapshots.push(ExpressionMatrix::with_cell_ids(values, t, ids)?);
            columns.push(cols);
        }
        let ds = SnapshotDataset::new(snapshots, traj.gene_names().to_vec(), split)?;
        Ok((ds, columns))
    };
    let (train, train_columns) = build(&train_cells, SplitTag::Train, 0)?;
    let (test, test_columns) = build(&test_cells, SplitTag::Test, 1)?;

    Ok(AssembledData {
        train,
        test,
        truth,
        train_cells,
        test_cells,
        train_columns,
        test_columns,
    })
}
