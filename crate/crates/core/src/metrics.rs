//! Ranking metrics for edge predictions and the partial-correlation baseline.
//!
//! All metrics run over the `g(g-1)` ordered off-diagonal pairs against an
//! unsigned 0/1 adjacency.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::{EdgeProbabilityMatrix, SnapshotDataset};
use crate::error::{invalid, numeric, shape_err, Result};
use crate::rng::{self, tags};

/// Off-diagonal `(score, is_edge)` pairs in `(source, target)` lexicographic order.
fn pairs(
    scores: &EdgeProbabilityMatrix,
    truth: ArrayView2<'_, u8>,
) -> Result<(Vec<(f64, bool)>, usize)> {
    let g = scores.n_genes();
    if truth.dim() != (g, g) {
        return Err(shape_err!("truth {:?} vs {g}x{g} scores", truth.dim()));
    }
    let mut out = Vec::with_capacity(g * g.saturating_sub(1));
    for s in 0..g {
        for t in 0..g {
            if s != t {
                out.push((scores.get(s, t), truth[[s, t]] != 0));
            }
        }
    }
    let pos = out.iter().filter(|p| p.1).count();
    if pos == 0 || pos == out.len() {
        return Err(invalid!(
            "degenerate truth: {pos} edges among {} ordered pairs",
            out.len()
        ));
    }
    Ok((out, pos))
}

/// Groups of equal scores in descending score order, as `(positives, negatives)`.
fn tie_blocks(mut pairs: Vec<(f64, bool)>) -> Vec<(usize, usize)> {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for (s, pos) in pairs {
        if last != Some(s) {
            blocks.push((0, 0));
            last = Some(s);
        }
        let b = blocks.last_mut().expect("block");
        if pos {
            b.0 += 1;
        } else {
            b.1 += 1;
        }
    }
    blocks
}

/// Mann-Whitney AUROC; each tied positive-negative pair counts one half.
pub fn auroc(scores: &EdgeProbabilityMatrix, truth: ArrayView2<'_, u8>) -> Result<f64> {
    let (pairs, n_pos) = pairs(scores, truth)?;
    let n_neg = pairs.len() - n_pos;
    let mut neg_below = n_neg as f64;
    let mut wins = 0.0;
    for (p, q) in tie_blocks(pairs) {
        neg_below -= q as f64;
        wins += p as f64 * (neg_below + 0.5 * q as f64);
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Average precision over score thresholds; equal scores form one threshold.
pub fn auprc(scores: &EdgeProbabilityMatrix, truth: ArrayView2<'_, u8>) -> Result<f64> {
    let (pairs, n_pos) = pairs(scores, truth)?;
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    for (p, q) in tie_blocks(pairs) {
        tp += p;
        fp += q;
        if p > 0 {
            ap += (tp as f64 / (tp + fp) as f64) * (p as f64 / n_pos as f64);
        }
    }
    Ok(ap)
}

/// Precision among the top-`k` pairs (`k` = true edge count) over the
/// random-predictor precision `k / (g(g-1))`. Ties at the cut go to the
/// lexicographically smallest `(source, target)`.
pub fn epr(scores: &EdgeProbabilityMatrix, truth: ArrayView2<'_, u8>) -> Result<f64> {
    let (pairs, k) = pairs(scores, truth)?;
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps lexicographic order within ties.
    order.sort_by(|&a, &b| pairs[b].0.total_cmp(&pairs[a].0));
    let hits = order[..k].iter().filter(|&&i| pairs[i].1).count();
    Ok((hits * n) as f64 / (k * k) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    pub epr: f64,
    pub n_genes: usize,
    pub k_edges: usize,
}

pub fn evaluate(
    scores: &EdgeProbabilityMatrix,
    truth: ArrayView2<'_, u8>,
) -> Result<MetricsReport> {
    let (_, k) = pairs(scores, truth)?;
    Ok(MetricsReport {
        auroc: auroc(scores, truth)?,
        auprc: auprc(scores, truth)?,
        epr: epr(scores, truth)?,
        n_genes: scores.n_genes(),
        k_edges: k,
    })
}

/// AUROC distribution when the true edges are placed at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub std: f64,
    /// Standard error of a mean over `n_predictions` independent predictors.
    pub std_error: f64,
    pub repetitions: usize,
}

/// Scores every prediction against `repetitions` random permutations of the
/// off-diagonal truth entries.
pub fn shuffled_truth_null(
    predictions: &[EdgeProbabilityMatrix],
    truth: ArrayView2<'_, u8>,
    repetitions: usize,
    seed: u64,
) -> Result<NullSummary> {
    if predictions.is_empty() || repetitions == 0 {
        return Err(invalid!("null model needs predictions and repetitions"));
    }
    let g = truth.nrows();
    let slots: Vec<(usize, usize)> = (0..g)
        .flat_map(|s| (0..g).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect();
    let mut labels: Vec<u8> = slots.iter().map(|&(s, t)| truth[[s, t]]).collect();
    let mut rng = rng::stream(rng::derive_seed(seed, &[tags::NULL_MODEL]), 0);
    let mut values = Vec::with_capacity(repetitions * predictions.len());
    let mut shuffled = Array2::<u8>::zeros((g, g));
    for _ in 0..repetitions {
        labels.shuffle(&mut rng);
        for (&(s, t), &l) in slots.iter().zip(&labels) {
            shuffled[[s, t]] = l;
        }
        for p in predictions {
            values.push(auroc(p, shuffled.view())?);
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(NullSummary {
        mean,
        std,
        std_error: std / (predictions.len() as f64).sqrt(),
        repetitions,
    })
}

/// Signed partial correlations of the rows of `data` (genes x observations).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrelation {
    pub rho: Array2<f64>,
    /// Whether the covariance was singular and a `1e-8 I` ridge was added.
    pub ridge_applied: bool,
}

pub const PPCOR_RIDGE: f64 = 1e-8;

pub fn partial_correlation(data: ArrayView2<'_, f64>) -> Result<PartialCorrelation> {
    let (g, n) = data.dim();
    if n <= g {
        return Err(invalid!(
            "{n} observations for {g} genes; need more observations than genes"
        ));
    }
    let means: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|r| r.sum() / n as f64)
        .collect();
    let cov = DMatrix::from_fn(g, g, |a, b| {
        let ra = data.row(a);
        let rb = data.row(b);
        ra.iter()
            .zip(rb.iter())
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    let (chol, ridge_applied) = match cov.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            log::warn!("singular covariance; adding a {PPCOR_RIDGE:e} ridge");
            let ridged = cov + DMatrix::identity(g, g) * PPCOR_RIDGE;
            let c = ridged
                .cholesky()
                .ok_or_else(|| numeric!("covariance is singular even after ridge"))?;
            (c, true)
        }
    };
    let precision = chol.inverse();
    let rho = Array2::from_shape_fn((g, g), |(a, b)| {
        if a == b {
            1.0
        } else {
            -precision[(a, b)] / (precision[(a, a)] * precision[(b, b)]).sqrt()
        }
    });
    // Enforce exact symmetry against rounding in the inverse.
    let rho = Array2::from_shape_fn((g, g), |(a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        rho[[lo, hi]]
    });
    Ok(PartialCorrelation { rho, ridge_applied })
}

/// Partial-correlation baseline.
#[derive(Debug, Clone)]
pub struct PpcorBaseline {
    /// `|rho|` on both ordered pairs.
    pub scores: EdgeProbabilityMatrix,
    pub partial: PartialCorrelation,
}

/// Pools every cell of every snapshot and scores pairs by `|rho|`.
pub fn ppcor_baseline(ds: &SnapshotDataset) -> Result<PpcorBaseline> {
    let g = ds.n_genes();
    let total: usize = ds.snapshots().iter().map(|s| s.n_cells()).sum();
    let mut pooled = Array2::zeros((g, total));
    let mut col = 0;
    for snap in ds.snapshots() {
        let c = snap.n_cells();
        pooled
            .slice_mut(ndarray::s![.., col..col + c])
            .assign(&snap.values());
        col += c;
    }
    let partial = partial_correlation(pooled.view())?;
    let scores = EdgeProbabilityMatrix::new(partial.rho.mapv(|r| r.abs().min(1.0)))?;
    Ok(PpcorBaseline { scores, partial })
}
