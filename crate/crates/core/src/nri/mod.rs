//! Neural relational inference: a message-passing encoder scores every
//! ordered gene pair, Gumbel-softmax samples a relaxed graph, and a one-step
//! decoder predicts the next expression vector along each trajectory.

mod config;
mod model;

use std::collections::HashMap;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{check_params, GradCheckReport};
use crate::autodiff::{Adam, Axis, Tape, Tensor, Var};
use crate::datamodel::{EdgeProbabilityMatrix, TrajectorySet};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tags};

pub use config::{EncoderKind, NriConfig, TauSchedule};
pub use model::{
    edge_list, gumbel_noise, gumbel_softmax, BatchGraph, DecoderBatch, Mode, NriModel, EDGE_PRESENT,
};

/// Per-ordered-pair edge-type scores, indexed `[source, target, type]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLogits {
    values: Array3<f64>,
}

impl EdgeLogits {
    /// Builds from `(edge, type)` rows in [`edge_list`] order.
    pub fn from_rows(n_genes: usize, rows: &Tensor) -> Result<Self> {
        let edges = edge_list(n_genes);
        if rows.rows() != edges.len() {
            return Err(invalid!(
                "{} logit rows for {} edges",
                rows.rows(),
                edges.len()
            ));
        }
        let mut values = Array3::zeros((n_genes, n_genes, rows.cols()));
        for (k, &(s, t)) in edges.iter().enumerate() {
            for c in 0..rows.cols() {
                values[[s, t, c]] = rows.get(k, c);
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn n_genes(&self) -> usize {
        self.values.dim().0
    }

    /// Softmax over edge types, edge-present coordinate.
    pub fn probabilities(&self) -> Result<EdgeProbabilityMatrix> {
        let g = self.n_genes();
        let mut probs = Array2::zeros((g, g));
        for s in 0..g {
            for t in 0..g {
                if s == t {
                    continue;
                }
                let lane = self.values.slice(ndarray::s![s, t, ..]);
                let max = lane.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let z: f64 = lane.iter().map(|&x| (x - max).exp()).sum();
                probs[[s, t]] = (lane[EDGE_PRESENT] - max).exp() / z;
            }
        }
        EdgeProbabilityMatrix::new(probs)
    }
}

/// Loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts<T> {
    pub nll: T,
    pub kl: T,
    pub smooth: T,
    pub total: T,
}

impl LossParts<Var<'_>> {
    pub fn values(&self) -> LossParts<f64> {
        LossParts {
            nll: self.nll.item(),
            kl: self.kl.item(),
            smooth: self.smooth.item(),
            total: self.total.item(),
        }
    }
}

/// Gaussian negative log-likelihood of the predictions, KL of the edge
/// posterior to the prior summed over pairs, and the density penalty.
/// The first two are averaged over the `n_samples` trajectories in the batch.
pub fn loss<'t>(
    logits: Var<'t>,
    predictions: Var<'t>,
    targets: &Tensor,
    n_samples: usize,
    cfg: &NriConfig,
) -> Result<LossParts<Var<'t>>> {
    let tape = logits.tape();
    let b = n_samples as f64;
    let var = cfg.recon_variance;
    let n_obs = targets.len() as f64;
    let target = tape.constant(targets.clone())?;
    let sq = predictions.sub(&target)?.square()?.sum()?;
    let nll = sq.scale(1.0 / (2.0 * var * b))?.add_const(&Tensor::scalar(
        0.5 * n_obs / b * (2.0 * std::f64::consts::PI * var).ln(),
    ))?;

    let [rows, types] = logits.shape();
    let log_p = logits.log_softmax(Axis::Cols)?;
    let p = logits.softmax(Axis::Cols)?;
    let log_prior = Tensor::from_fn(rows, types, |_, c| -cfg.kl_prior[c].ln());
    let kl = p
        .mul(&log_p.add_const(&log_prior)?)?
        .sum()?
        .scale(1.0 / b)?;

    let smooth = p
        .slice_cols(EDGE_PRESENT, EDGE_PRESENT + 1)?
        .mean()?
        .scale(cfg.smoothness_coeff)?;
    let total = nll.add(&kl)?.add(&smooth)?;
    Ok(LossParts {
        nll,
        kl,
        smooth,
        total,
    })
}

/// Encoder features: one row per `(sample, gene)` with the gene's series.
pub fn encoder_features(traj: &TrajectorySet, samples: &[usize]) -> Tensor {
    let (k, g) = (traj.n_times(), traj.n_genes());
    let v = traj.values();
    let mut data = Vec::with_capacity(samples.len() * g * k);
    for &p in samples {
        for r in 0..g {
            data.extend((0..k).map(|i| v[[p, i, r]]));
        }
    }
    Tensor::new(samples.len() * g, k, data).expect("shape")
}

/// Decoder rows `(sample, transition, gene)`.
pub fn decoder_batch(traj: &TrajectorySet, samples: &[usize]) -> DecoderBatch {
    let (k, g) = (traj.n_times(), traj.n_genes());
    let v = traj.values();
    let ts = traj.timestamps();
    let n = samples.len() * (k - 1) * g;
    let (mut cur, mut next, mut dt) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &p in samples {
        for i in 0..k - 1 {
            for r in 0..g {
                cur.push(v[[p, i, r]]);
                next.push(v[[p, i + 1, r]]);
                dt.push(ts[i + 1] - ts[i]);
            }
        }
    }
    DecoderBatch {
        current: Tensor::new(n, 1, cur).expect("shape"),
        next: Tensor::new(n, 1, next).expect("shape"),
        dt: Tensor::new(n, 1, dt).expect("shape"),
    }
}

/// Index tables cached per batch size.
struct Graphs {
    g: usize,
    k: usize,
    cache: HashMap<usize, (BatchGraph, BatchGraph)>,
}

impl Graphs {
    fn new(g: usize, k: usize) -> Self {
        Self {
            g,
            k,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, b: usize) -> &(BatchGraph, BatchGraph) {
        let (g, k) = (self.g, self.k);
        self.cache
            .entry(b)
            .or_insert_with(|| (BatchGraph::new(g, b, 1), BatchGraph::new(g, b, k - 1)))
    }
}

/// Full forward pass for a batch: logits, relaxed samples, predictions, loss.
pub fn forward_loss<'t>(
    tape: &'t Tape,
    model: &NriModel,
    traj: &TrajectorySet,
    samples: &[usize],
    tau: f64,
    noise: Option<&Tensor>,
    mode: &mut Mode<'_>,
    cfg: &NriConfig,
) -> Result<LossParts<Var<'t>>> {
    let (g, k) = (traj.n_genes(), traj.n_times());
    let enc_graph = BatchGraph::new(g, samples.len(), 1);
    let dec_graph = BatchGraph::new(g, samples.len(), k - 1);
    batch_loss(
        tape,
        model,
        traj,
        samples,
        (&enc_graph, &dec_graph),
        tau,
        noise,
        mode,
        cfg,
    )
}

#[allow(clippy::too_many_arguments)]
fn batch_loss<'t>(
    tape: &'t Tape,
    model: &NriModel,
    traj: &TrajectorySet,
    samples: &[usize],
    graphs: (&BatchGraph, &BatchGraph),
    tau: f64,
    noise: Option<&Tensor>,
    mode: &mut Mode<'_>,
    cfg: &NriConfig,
) -> Result<LossParts<Var<'t>>> {
    let features = encoder_features(traj, samples);
    let batch = decoder_batch(traj, samples);
    let logits = model.encode(tape, &features, graphs.0, mode)?;
    let z = gumbel_softmax(logits, tau, noise)?;
    let weight = z.slice_cols(EDGE_PRESENT, EDGE_PRESENT + 1)?;
    let pred = model.decode(tape, &batch, weight, graphs.1, mode)?;
    loss(logits, pred, &batch.next, samples.len(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tau: f64,
    pub nll: f64,
    pub kl: f64,
    pub smooth: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub probabilities: EdgeProbabilityMatrix,
    pub logits: EdgeLogits,
    pub log: Vec<EpochLog>,
}

fn at_epoch(epoch: usize, err: Error) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("training diverged at epoch {epoch}: {msg}")),
        other => other,
    }
}

/// Mean encoder logits over all trajectories, without dropout.
pub fn mean_logits(model: &NriModel, traj: &TrajectorySet, chunk: usize) -> Result<EdgeLogits> {
    let g = traj.n_genes();
    let e = g * (g - 1);
    let n = traj.n_trajectories();
    let mut sum = Tensor::zeros(e, 2);
    let all: Vec<usize> = (0..n).collect();
    for part in all.chunks(chunk.max(1)) {
        let tape = Tape::new();
        let graph = BatchGraph::new(g, part.len(), 1);
        let logits = model.encode(
            &tape,
            &encoder_features(traj, part),
            &graph,
            &mut Mode::Eval,
        )?;
        let v = logits.value();
        let s = sum.data_mut();
        for (row, chunk) in v.data().chunks(2).enumerate() {
            s[(row % e) * 2] += chunk[0];
            s[(row % e) * 2 + 1] += chunk[1];
        }
    }
    let mean = sum.map(|x| x / n as f64);
    EdgeLogits::from_rows(g, &mean)
}

/// Trains on every trajectory in `traj` and returns edge probabilities from
/// the mean encoder logits.
pub fn train(traj: &TrajectorySet, cfg: &NriConfig) -> Result<TrainingOutput> {
    cfg.validate()?;
    let (n, k, g) = (traj.n_trajectories(), traj.n_times(), traj.n_genes());
    if n == 0 || k < 2 || g < 2 {
        return Err(invalid!(
            "training needs trajectories with >= 2 genes and >= 2 time points"
        ));
    }
    let mut init_rng = rng::stream(rng::derive_seed(cfg.seed, &[tags::NRI_INIT]), 0);
    let mut batch_rng = rng::stream(rng::derive_seed(cfg.seed, &[tags::NRI_BATCH]), 0);
    let mut noise_rng = rng::stream(rng::derive_seed(cfg.seed, &[tags::NRI_NOISE]), 0);
    let mut model = NriModel::new(cfg, g, k, &mut init_rng)?;
    let mut opt = Adam::new(&model.params, cfg.adam());
    let mut graphs = Graphs::new(g, k);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let tau = cfg.temperature(epoch);
        order.shuffle(&mut batch_rng);
        let mut acc = [0.0; 4];
        for samples in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let noise = gumbel_noise(samples.len() * g * (g - 1), 2, &mut noise_rng);
            let (enc_graph, dec_graph) = graphs.get(samples.len());
            let parts = batch_loss(
                &tape,
                &model,
                traj,
                samples,
                (enc_graph, dec_graph),
                tau,
                Some(&noise),
                &mut Mode::Train(&mut noise_rng),
                cfg,
            )
            .map_err(|e| at_epoch(epoch, e))?;
            let grads = tape
                .backward(parts.total)
                .map_err(|e| at_epoch(epoch, e))?
                .for_params(&model.params);
            opt.step(&mut model.params, &grads)
                .map_err(|e| at_epoch(epoch, e))?;
            let w = samples.len() as f64 / n as f64;
            let v = parts.values();
            for (a, x) in acc.iter_mut().zip([v.nll, v.kl, v.smooth, v.total]) {
                *a += w * x;
            }
        }
        log::debug!("epoch {epoch}: tau {tau:.3} loss {:.4}", acc[3]);
        log.push(EpochLog {
            epoch,
            tau,
            nll: acc[0],
            kl: acc[1],
            smooth: acc[2],
            total: acc[3],
        });
    }
    let logits = mean_logits(&model, traj, cfg.batch_size)?;
    Ok(TrainingOutput {
        probabilities: logits.probabilities()?,
        logits,
        log,
    })
}

/// Finite-difference check of the full loss with respect to every parameter
/// on a small random three-gene problem, once per encoder kind.
pub fn loss_gradcheck(seed: u64) -> Result<Vec<GradCheckReport>> {
    use rand::Rng;
    let (g, k, n) = (3, 4, 2);
    let mut r = rng::stream(seed, 1);
    let values = Array3::from_shape_fn((n, k, g), |_| r.random_range(0.0..1.0));
    let traj = TrajectorySet::new(
        values,
        vec![0.0, 0.5, 1.5, 2.0],
        (0..g).map(|i| format!("g{i}")).collect(),
        crate::datamodel::TrajectoryOrigin::GroundTruth,
    )?;
    let mut reports = Vec::new();
    for kind in [EncoderKind::Mlp, EncoderKind::Gin] {
        let cfg = NriConfig {
            encoder_kind: kind,
            hidden_dim: 4,
            decoder_dt_input: kind == EncoderKind::Gin,
            ..NriConfig::default()
        };
        let model = NriModel::new(&cfg, g, k, &mut rng::stream(seed, 2))?;
        let noise = gumbel_noise(n * g * (g - 1), 2, &mut rng::stream(seed, 3));
        let samples: Vec<usize> = (0..n).collect();
        let name = format!("nri_loss_{kind:?}").to_lowercase();
        reports.push(check_params(&name, &model.params, |tape, params| {
            let mut m = model.clone();
            m.params = params.clone();
            let mut drop_rng = rng::stream(seed, 4);
            let parts = forward_loss(
                tape,
                &m,
                &traj,
                &samples,
                0.5,
                Some(&noise),
                &mut Mode::Train(&mut drop_rng),
                &cfg,
            )?;
            Ok(parts.total)
        })?);
    }
    Ok(reports)
}
