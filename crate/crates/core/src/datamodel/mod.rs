//! Domain types shared by every stage of the pipeline.
//!
//! All matrices index genes in the canonical order given by the dataset's
//! `gene_names`. Instances are validated on construction and immutable
//! afterwards.

mod grn;
mod io;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};

pub use grn::{Combination, Edge, GeneKinetics, GrnDefinition, Sign};
pub use io::{
    load_dataset, load_edges_csv, load_labeled_matrix_csv, load_matrix_csv, load_trajectories_csv,
    save_dataset, save_dataset_as, save_edges_csv, save_labeled_matrix_csv, save_matrix_csv,
    save_trajectories_csv, DatasetManifest, LabeledMatrix, SnapshotEntry,
};

/// A genes × cells expression snapshot taken at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Array2<f64>,
    time: f64,
    cell_ids: Vec<String>,
}

impl ExpressionMatrix {
    /// Builds a snapshot with generated cell ids (`cell_0`, `cell_1`, ...).
    pub fn new(values: Array2<f64>, time: f64) -> Result<Self> {
        let ids = (0..values.ncols()).map(|p| format!("cell_{p}")).collect();
        Self::with_cell_ids(values, time, ids)
    }

    pub fn with_cell_ids(values: Array2<f64>, time: f64, cell_ids: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(invalid!(
                "snapshot needs at least 2 genes, got {}",
                values.nrows()
            ));
        }
        if values.ncols() < 1 {
            return Err(invalid!("snapshot needs at least 1 cell"));
        }
        if cell_ids.len() != values.ncols() {
            return Err(shape_err!(
                "{} cell ids for {} cells",
                cell_ids.len(),
                values.ncols()
            ));
        }
        if !time.is_finite() {
            return Err(invalid!("non-finite snapshot time {time}"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid!("non-finite entry {bad} in snapshot at t={time}"));
        }
        if let Some(bad) = values.iter().find(|&&v| v < 0.0) {
            return Err(invalid!("negative entry {bad} in snapshot at t={time}"));
        }
        Ok(Self {
            values,
            time,
            cell_ids,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cells(&self) -> usize {
        self.values.ncols()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    /// Expression vector of cell `p`.
    pub fn cell(&self, p: usize) -> ArrayView1<'_, f64> {
        self.values.column(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
    #[default]
    All,
}

/// Ordered snapshots sharing one gene set.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    snapshots: Vec<ExpressionMatrix>,
    gene_names: Vec<String>,
    split: SplitTag,
}

impl SnapshotDataset {
    pub fn new(
        snapshots: Vec<ExpressionMatrix>,
        gene_names: Vec<String>,
        split: SplitTag,
    ) -> Result<Self> {
        if gene_names.is_empty() {
            return Err(invalid!("empty gene list"));
        }
        if snapshots.len() < 2 {
            return Err(invalid!(
                "k >= 2 required, got {} snapshot(s)",
                snapshots.len()
            ));
        }
        for (i, snap) in snapshots.iter().enumerate() {
            if snap.n_genes() != gene_names.len() {
                return Err(shape_err!(
                    "gene count mismatch: snapshot {i} has {} genes, dataset names {}",
                    snap.n_genes(),
                    gene_names.len()
                ));
            }
        }
        for pair in snapshots.windows(2) {
            if pair[1].time() <= pair[0].time() {
                return Err(invalid!(
                    "timestamps not increasing ({} then {})",
                    pair[0].time(),
                    pair[1].time()
                ));
            }
        }
        Ok(Self {
            snapshots,
            gene_names,
            split,
        })
    }

    pub fn snapshots(&self) -> &[ExpressionMatrix] {
        &self.snapshots
    }

    pub fn snapshot(&self, i: usize) -> &ExpressionMatrix {
        &self.snapshots[i]
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn n_genes(&self) -> usize {
        self.gene_names.len()
    }

    /// Number of time points `k`.
    pub fn n_times(&self) -> usize {
        self.snapshots.len()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryOrigin {
    GroundTruth,
    Reconstructed,
}

/// Per-cell expression sequences, indexed `[trajectory, time, gene]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    values: Array3<f64>,
    timestamps: Vec<f64>,
    gene_names: Vec<String>,
    origin: TrajectoryOrigin,
}

impl TrajectorySet {
    pub fn new(
        values: Array3<f64>,
        timestamps: Vec<f64>,
        gene_names: Vec<String>,
        origin: TrajectoryOrigin,
    ) -> Result<Self> {
        let (_, k, g) = values.dim();
        if timestamps.len() != k {
            return Err(shape_err!(
                "{} timestamps for {k} time points",
                timestamps.len()
            ));
        }
        if gene_names.len() != g {
            return Err(shape_err!("{} gene names for {g} genes", gene_names.len()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid!("non-finite trajectory entry {bad}"));
        }
        Ok(Self {
            values,
            timestamps,
            gene_names,
            origin,
        })
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn origin(&self) -> TrajectoryOrigin {
        self.origin
    }

    pub fn n_trajectories(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_times(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_genes(&self) -> usize {
        self.values.dim().2
    }

    /// Keeps only trajectories whose index is listed, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_trajectories();
        if let Some(bad) = indices.iter().find(|&&p| p >= n) {
            return Err(shape_err!("trajectory index {bad} out of range for {n}"));
        }
        let values = self.values.select(ndarray::Axis(0), indices);
        Ok(Self {
            values,
            timestamps: self.timestamps.clone(),
            gene_names: self.gene_names.clone(),
            origin: self.origin,
        })
    }
}

/// Directed edge-existence probabilities; entry `(r, s)` is `P(r -> s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilityMatrix {
    probs: Array2<f64>,
}

impl EdgeProbabilityMatrix {
    /// Validates a square matrix of probabilities. The diagonal is forced to zero.
    pub fn new(mut probs: Array2<f64>) -> Result<Self> {
        let g = probs.nrows();
        if probs.ncols() != g {
            return Err(shape_err!(
                "edge matrix must be square, got {:?}",
                probs.dim()
            ));
        }
        for r in 0..g {
            probs[[r, r]] = 0.0;
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid!("edge probability {bad} outside [0, 1]"));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn n_genes(&self) -> usize {
        self.probs.nrows()
    }

    pub fn get(&self, source: usize, target: usize) -> f64 {
        self.probs[[source, target]]
    }
}
