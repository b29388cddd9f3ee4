//! Trajectory stitching from transport plans and reconstruction error against
//! ground truth.
//!
//! Trajectories are rooted at the cells of the first snapshot. Each step picks
//! a successor from the current cell's row of the plan, so a reconstructed
//! value is always an observed column, never an interpolation. Two roots may
//! merge onto the same successor; merged suffixes are kept as duplicates.

use ndarray::{Array3, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{SnapshotDataset, TrajectoryOrigin, TrajectorySet};
use crate::error::{invalid, numeric, shape_err, Result};
use crate::rng::{self, tags};
use crate::transport::TransportPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StitchMode {
    /// Most probable successor; ties go to the lowest column index.
    #[default]
    Argmax,
    /// Successor drawn in proportion to the plan row.
    Sample { seed: u64 },
}

/// Column of the largest entry, lowest index on ties. `None` for an all-zero row.
pub fn argmax_successor(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (q, &v) in row.iter().enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((q, v));
        }
    }
    best.map(|(q, _)| q)
}

fn check_plans(ds: &SnapshotDataset, plans: &[ArrayView2<f64>]) -> Result<()> {
    if plans.len() + 1 != ds.n_times() {
        return Err(shape_err!(
            "{} plans for {} snapshots",
            plans.len(),
            ds.n_times()
        ));
    }
    for (i, plan) in plans.iter().enumerate() {
        let want = (ds.snapshot(i).n_cells(), ds.snapshot(i + 1).n_cells());
        if plan.dim() != want {
            return Err(shape_err!(
                "plan {i} is {:?}, snapshots need {want:?}",
                plan.dim()
            ));
        }
    }
    Ok(())
}

/// Index paths `paths[p][i]` = column of snapshot `i` visited by the trajectory rooted at cell `p`.
pub fn stitch_paths(
    ds: &SnapshotDataset,
    plans: &[ArrayView2<f64>],
    mode: StitchMode,
) -> Result<Vec<Vec<usize>>> {
    check_plans(ds, plans)?;
    (0..ds.snapshot(0).n_cells())
        .into_par_iter()
        .map(|root| {
            let mut rng = match mode {
                StitchMode::Sample { seed } => Some(rng::stream(seed, root as u64)),
                StitchMode::Argmax => None,
            };
            let mut path = Vec::with_capacity(plans.len() + 1);
            let mut current = root;
            path.push(current);
            for (i, plan) in plans.iter().enumerate() {
                let row = plan.row(current);
                let row = row
                    .as_slice()
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| row.to_vec());
                let next = match rng.as_mut() {
                    None => argmax_successor(&row),
                    Some(rng) => WeightedIndex::new(&row).ok().map(|w| w.sample(rng)),
                };
                current = next.ok_or_else(|| {
                    numeric!("plan {i} row {current} has no admissible successor (all zeros)")
                })?;
                path.push(current);
            }
            Ok(path)
        })
        .collect()
}

/// Materializes index paths into expression trajectories.
pub fn paths_to_trajectories(ds: &SnapshotDataset, paths: &[Vec<usize>]) -> Result<TrajectorySet> {
    let (k, g) = (ds.n_times(), ds.n_genes());
    let mut values = Array3::zeros((paths.len(), k, g));
    for (p, path) in paths.iter().enumerate() {
        if path.len() != k {
            return Err(shape_err!(
                "path {p} has length {}, expected {k}",
                path.len()
            ));
        }
        for (i, &cell) in path.iter().enumerate() {
            let snap = ds.snapshot(i);
            if cell >= snap.n_cells() {
                return Err(shape_err!("path {p} visits cell {cell} of snapshot {i}"));
            }
            for r in 0..g {
                values[[p, i, r]] = snap.values()[[r, cell]];
            }
        }
    }
    TrajectorySet::new(
        values,
        ds.timestamps(),
        ds.gene_names().to_vec(),
        TrajectoryOrigin::Reconstructed,
    )
}

/// Chains the per-pair plans into one trajectory per first-snapshot cell.
pub fn stitch_trajectories(ds: &SnapshotDataset, plans: &[TransportPlan]) -> Result<TrajectorySet> {
    stitch_trajectories_with(ds, plans, StitchMode::Argmax)
}

pub fn stitch_trajectories_with(
    ds: &SnapshotDataset,
    plans: &[TransportPlan],
    mode: StitchMode,
) -> Result<TrajectorySet> {
    let views: Vec<_> = plans.iter().map(|p| p.gamma.view()).collect();
    let paths = stitch_paths(ds, &views, mode)?;
    paths_to_trajectories(ds, &paths)
}

/// Baseline with no reconstruction: every successor is drawn uniformly at random.
pub fn random_trajectories(ds: &SnapshotDataset, seed: u64) -> Result<TrajectorySet> {
    let seed = rng::derive_seed(seed, &[tags::RANDOM_STITCH]);
    let mut rng = rng::stream(seed, 0);
    let paths: Vec<Vec<usize>> = (0..ds.snapshot(0).n_cells())
        .map(|root| {
            std::iter::once(root)
                .chain((1..ds.n_times()).map(|i| rng.random_range(0..ds.snapshot(i).n_cells())))
                .collect()
        })
        .collect();
    paths_to_trajectories(ds, &paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionError {
    /// Target time index of the transition `i - 1 -> i`.
    pub time_index: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub per_transition: Vec<TransitionError>,
}

impl ErrorSummary {
    /// Mean of the per-transition means.
    pub fn overall_mean(&self) -> f64 {
        let n = self.per_transition.len().max(1) as f64;
        self.per_transition.iter().map(|t| t.mean).sum::<f64>() / n
    }

    pub fn means(&self) -> Vec<f64> {
        self.per_transition.iter().map(|t| t.mean).collect()
    }
}

/// Mean and population standard deviation over trajectories of
/// `(1/g) ‖V̂_p(t_i) − V_p(t_i)‖₂`, for every time index `i ≥ 1`.
pub fn reconstruction_error(
    reconstructed: &TrajectorySet,
    truth: &TrajectorySet,
) -> Result<ErrorSummary> {
    if reconstructed.n_genes() != truth.n_genes() || reconstructed.n_times() != truth.n_times() {
        return Err(shape_err!(
            "reconstructed is {:?}, truth is {:?}",
            reconstructed.values().dim(),
            truth.values().dim()
        ));
    }
    if reconstructed.n_trajectories() != truth.n_trajectories() {
        return Err(invalid!(
            "unmatched trajectory identities: {} reconstructed vs {} true trajectories",
            reconstructed.n_trajectories(),
            truth.n_trajectories()
        ));
    }
    if reconstructed.timestamps() != truth.timestamps() {
        return Err(invalid!(
            "timestamps of reconstructed and true trajectories differ"
        ));
    }
    let (n, k, g) = truth.values().dim();
    if n == 0 {
        return Err(invalid!("no trajectories to compare"));
    }
    let (v_hat, v) = (reconstructed.values(), truth.values());
    let per_transition = (1..k)
        .map(|i| {
            let errs: Vec<f64> = (0..n)
                .map(|p| {
                    let sq: f64 = (0..g)
                        .map(|r| (v_hat[[p, i, r]] - v[[p, i, r]]).powi(2))
                        .sum();
                    sq.sqrt() / g as f64
                })
                .collect();
            let mean = errs.iter().sum::<f64>() / n as f64;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
            TransitionError {
                time_index: i,
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    Ok(ErrorSummary { per_transition })
}

/// Errors of growth-reweighted OT, plain OT and the random baseline on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub wot: ErrorSummary,
    pub ot: Option<ErrorSummary>,
    pub random: ErrorSummary,
    pub random_seed: u64,
}

pub fn compare_reconstructions(
    ds: &SnapshotDataset,
    truth: &TrajectorySet,
    wot_plans: &[TransportPlan],
    ot_plans: Option<&[TransportPlan]>,
    random_seed: u64,
) -> Result<ReconstructionReport> {
    let wot = reconstruction_error(&stitch_trajectories(ds, wot_plans)?, truth)?;
    let ot = ot_plans
        .map(|plans| reconstruction_error(&stitch_trajectories(ds, plans)?, truth))
        .transpose()?;
    let random = reconstruction_error(&random_trajectories(ds, random_seed)?, truth)?;
    Ok(ReconstructionReport {
        wot,
        ot,
        random,
        random_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{ExpressionMatrix, SplitTag};
    use ndarray::{arr2, Array2};
    use rand::SeedableRng;

    fn dataset(g: usize, cells: &[usize], seed: u64) -> SnapshotDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let snaps = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                ExpressionMatrix::new(
                    Array2::from_shape_fn((g, c), |_| rng.random::<f64>()),
                    i as f64,
                )
                .unwrap()
            })
            .collect();
        SnapshotDataset::new(
            snaps,
            (0..g).map(|r| format!("g{r}")).collect(),
            SplitTag::Test,
        )
        .unwrap()
    }

    #[test]
    fn identity_plans_keep_cells() {
        let ds = dataset(3, &[4, 4, 4], 1);
        let eye = Array2::<f64>::eye(4) * 0.25;
        let views = vec![eye.view(), eye.view()];
        let paths = stitch_paths(&ds, &views, StitchMode::Argmax).unwrap();
        for (p, path) in paths.iter().enumerate() {
            assert_eq!(path, &vec![p, p, p]);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax_successor(&[0.3, 0.3, 0.2]), Some(0));
        assert_eq!(argmax_successor(&[0.1, 0.3, 0.3]), Some(1));
        assert_eq!(argmax_successor(&[0.0, 0.0]), None);
    }

    #[test]
    fn zero_row_is_an_error() {
        let ds = dataset(2, &[2, 2], 2);
        let plan = arr2(&[[0.5, 0.0], [0.0, 0.0]]);
        assert!(stitch_paths(&ds, &[plan.view()], StitchMode::Argmax).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ds = dataset(2, &[2, 3], 2);
        let plan = Array2::<f64>::ones((2, 2));
        assert!(stitch_paths(&ds, &[plan.view()], StitchMode::Argmax).is_err());
        assert!(stitch_paths(&ds, &[], StitchMode::Argmax).is_err());
    }

    #[test]
    fn random_plans_match_brute_force_chaining() {
        let ds = dataset(2, &[4, 4, 4], 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let plans: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_fn((4, 4), |_| rng.random::<f64>()))
            .collect();
        let views: Vec<_> = plans.iter().map(|p| p.view()).collect();
        let paths = stitch_paths(&ds, &views, StitchMode::Argmax).unwrap();
        for root in 0..4 {
            let mut cur = root;
            let mut want = vec![cur];
            for plan in &plans {
                let mut best = 0;
                for q in 1..4 {
                    if plan[[cur, q]] > plan[[cur, best]] {
                        best = q;
                    }
                }
                cur = best;
                want.push(cur);
            }
            assert_eq!(paths[root], want);
        }
    }

    #[test]
    fn stitched_values_are_observed_columns() {
        let ds = dataset(3, &[5, 6, 4], 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let plans = [(5, 6), (6, 4)].map(|d| Array2::from_shape_fn(d, |_| rng.random::<f64>()));
        let views: Vec<_> = plans.iter().map(|p| p.view()).collect();
        for mode in [StitchMode::Argmax, StitchMode::Sample { seed: 3 }] {
            let paths = stitch_paths(&ds, &views, mode).unwrap();
            let traj = paths_to_trajectories(&ds, &paths).unwrap();
            for p in 0..5 {
                for i in 0..3 {
                    let snap = ds.snapshot(i);
                    let found = (0..snap.n_cells())
                        .any(|c| (0..3).all(|r| snap.values()[[r, c]] == traj.values()[[p, i, r]]));
                    assert!(found);
                }
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let ds = dataset(2, &[6, 6], 7);
        let plan = Array2::from_elem((6, 6), 1.0);
        let a = stitch_paths(&ds, &[plan.view()], StitchMode::Sample { seed: 1 }).unwrap();
        let b = stitch_paths(&ds, &[plan.view()], StitchMode::Sample { seed: 1 }).unwrap();
        assert_eq!(a, b);
    }

    fn traj(values: Array3<f64>) -> TrajectorySet {
        let (_, k, g) = values.dim();
        TrajectorySet::new(
            values,
            (0..k).map(|i| i as f64).collect(),
            (0..g).map(|r| format!("g{r}")).collect(),
            TrajectoryOrigin::GroundTruth,
        )
        .unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let t = traj(Array3::from_shape_fn((5, 4, 3), |_| rng.random::<f64>()));
        let e = reconstruction_error(&t, &t).unwrap();
        assert_eq!(e.per_transition.len(), 3);
        assert!(e
            .per_transition
            .iter()
            .all(|x| x.mean == 0.0 && x.std == 0.0));
    }

    #[test]
    fn unit_offset_in_four_genes_gives_half() {
        let truth = traj(Array3::zeros((1, 2, 4)));
        let mut v = Array3::zeros((1, 2, 4));
        v.slice_mut(ndarray::s![0, 1, ..]).fill(1.0);
        let e = reconstruction_error(&traj(v), &truth).unwrap();
        assert_eq!(e.per_transition[0].mean, 0.5);
    }

    #[test]
    fn error_matches_direct_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = traj(Array3::from_shape_fn((5, 3, 4), |_| rng.random::<f64>()));
        let b = traj(Array3::from_shape_fn((5, 3, 4), |_| rng.random::<f64>()));
        let e = reconstruction_error(&a, &b).unwrap();
        for i in 1..3 {
            let mut errs = vec![];
            for p in 0..5 {
                let mut s = 0.0;
                for r in 0..4 {
                    let d = a.values()[[p, i, r]] - b.values()[[p, i, r]];
                    s += d * d;
                }
                errs.push(s.sqrt() / 4.0);
            }
            let mean = errs.iter().sum::<f64>() / 5.0;
            let var = errs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
            assert_eq!(e.per_transition[i - 1].mean, mean);
            assert_eq!(e.per_transition[i - 1].std, var.sqrt());
        }
    }

    #[test]
    fn mismatched_identities_rejected() {
        let a = traj(Array3::zeros((5, 3, 2)));
        let b = traj(Array3::zeros((4, 3, 2)));
        assert!(reconstruction_error(&a, &b).is_err());
    }
}
