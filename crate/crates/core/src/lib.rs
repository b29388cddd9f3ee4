//! Cell-level trajectory reconstruction from unpaired expression snapshots with
//! unbalanced entropic optimal transport, followed by gene regulatory network
//! inference with a variational message-passing model.
//!
//! The pipeline stages live in separate modules:
//!
//! * [`simulate`] generates ground-truth trajectories and shuffled snapshot datasets,
//! * [`transport`] couples consecutive snapshots (Sinkhorn, growth reweighting),
//! * [`trajectory`] stitches couplings into trajectories and scores them,
//! * [`nri`] learns edge probabilities from trajectories, on top of [`autodiff`],
//! * [`metrics`] scores edge probabilities against a known network,
//! * [`pipeline`] chains everything from a single JSON configuration.

pub mod autodiff;
pub mod datamodel;
pub mod error;
pub mod metrics;
pub mod nri;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod trajectory;
pub mod transport;

pub use datamodel::{
    EdgeProbabilityMatrix, ExpressionMatrix, GrnDefinition, SnapshotDataset, SplitTag,
    TrajectoryOrigin, TrajectorySet,
};
pub use error::{Error, ErrorKind, Result};
