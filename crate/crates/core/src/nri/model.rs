use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};

use super::config::{EncoderKind, NriConfig};
use crate::autodiff::{Axis, Linear, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{invalid, Result};

/// Index of the "edge present" coordinate among the edge types.
pub const EDGE_PRESENT: usize = 1;

/// Training mode carries the dropout generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn dropout(&mut self, rate: f64) -> Option<(f64, &mut ChaCha8Rng)> {
        match self {
            Mode::Eval => None,
            Mode::Train(rng) => Some((rate, &mut **rng)),
        }
    }
}

/// Ordered pairs `(source, target)`, `source != target`, source-major.
pub fn edge_list(n_genes: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_genes * n_genes.saturating_sub(1));
    for s in 0..n_genes {
        for t in 0..n_genes {
            if s != t {
                out.push((s, t));
            }
        }
    }
    out
}

/// Row-index tables for a batch of `b` samples, each a complete graph on
/// `g` nodes replicated over `reps` slots (one slot per transition in the
/// decoder, a single slot in the encoder).
#[derive(Debug, Clone)]
pub struct BatchGraph {
    pub n_nodes: usize,
    pub senders: Rc<[usize]>,
    pub receivers: Rc<[usize]>,
    /// Sample-level edge row (`sample * E + e`) for each replicated edge.
    pub edge_of: Rc<[usize]>,
    /// Sample index of each node row.
    pub sample_of: Rc<[usize]>,
}

impl BatchGraph {
    pub fn new(g: usize, b: usize, reps: usize) -> Self {
        let edges = edge_list(g);
        let e = edges.len();
        let mut senders = Vec::with_capacity(b * reps * e);
        let mut receivers = Vec::with_capacity(b * reps * e);
        let mut edge_of = Vec::with_capacity(b * reps * e);
        for sample in 0..b {
            for rep in 0..reps {
                let base = (sample * reps + rep) * g;
                for (k, &(s, t)) in edges.iter().enumerate() {
                    senders.push(base + s);
                    receivers.push(base + t);
                    edge_of.push(sample * e + k);
                }
            }
        }
        let sample_of = (0..b * reps * g)
            .map(|n| n / (reps * g))
            .collect::<Vec<_>>();
        Self {
            n_nodes: b * reps * g,
            senders: senders.into(),
            receivers: receivers.into(),
            edge_of: edge_of.into(),
            sample_of: sample_of.into(),
        }
    }
}

#[derive(Debug, Clone)]
enum EncoderNet {
    Mlp {
        emb: Mlp,
        edge1: Mlp,
        node1: Mlp,
        edge2: Mlp,
        out: Linear,
    },
    Gin {
        emb: Mlp,
        eps: ParamId,
        gnn: Mlp,
        edge2: Mlp,
        out: Linear,
    },
}

#[derive(Debug, Clone)]
struct Decoder {
    msg: Mlp,
    node: Mlp,
    out: Linear,
}

/// Encoder and decoder parameters for a fixed gene count and series length.
#[derive(Debug, Clone)]
pub struct NriModel {
    pub params: ParamStore,
    n_genes: usize,
    n_times: usize,
    hidden: usize,
    enc_dropout: f64,
    dec_dropout: f64,
    dt_input: bool,
    encoder: EncoderNet,
    decoder: Decoder,
}

/// The decoder's input for one batch: every transition of every sample.
pub struct DecoderBatch {
    /// `(sample, transition, gene)` rows, one column.
    pub current: Tensor,
    pub next: Tensor,
    /// Time gap per row, used only when the decoder takes it as input.
    pub dt: Tensor,
}

/// Gumbel(0, 1) draws.
pub fn gumbel_noise(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let dist = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    Tensor::from_fn(rows, cols, |_, _| dist.sample(rng))
}

/// Relaxed one-hot samples `softmax((logits + noise) / tau)` along each row.
pub fn gumbel_softmax<'t>(logits: Var<'t>, tau: f64, noise: Option<&Tensor>) -> Result<Var<'t>> {
    if !(tau > 0.0) {
        return Err(invalid!("temperature must be > 0"));
    }
    let perturbed = match noise {
        Some(n) => logits.add_const(n)?,
        None => logits,
    };
    perturbed.scale(1.0 / tau)?.softmax(Axis::Cols)
}

impl NriModel {
    pub fn new(
        cfg: &NriConfig,
        n_genes: usize,
        n_times: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_genes == 0 || n_times < 2 {
            return Err(invalid!("need at least one gene and two time points"));
        }
        let h = cfg.hidden_dim;
        let mut params = ParamStore::new();
        let p = &mut params;
        let encoder = match cfg.encoder_kind {
            EncoderKind::Mlp => EncoderNet::Mlp {
                emb: Mlp::new(p, "enc.emb", n_times, h, h, rng),
                edge1: Mlp::new(p, "enc.edge1", 2 * h, h, h, rng),
                node1: Mlp::new(p, "enc.node1", h, h, h, rng),
                edge2: Mlp::new(p, "enc.edge2", 2 * h, h, h, rng),
                out: Linear::new(p, "enc.out", h, cfg.edge_types, rng),
            },
            EncoderKind::Gin => EncoderNet::Gin {
                emb: Mlp::new(p, "enc.emb", n_times, h, h, rng),
                eps: p.add("enc.gin_eps", Tensor::scalar(0.0)),
                gnn: Mlp::new(p, "enc.gnn", h, h, h, rng),
                edge2: Mlp::new(p, "enc.edge2", 2 * h, h, h, rng),
                out: Linear::new(p, "enc.out", h, cfg.edge_types, rng),
            },
        };
        let node_in = h + usize::from(cfg.decoder_dt_input);
        let decoder = Decoder {
            msg: Mlp::new(p, "dec.msg", 2, h, h, rng),
            node: Mlp::new(p, "dec.node", node_in, h, h, rng),
            out: Linear::new(p, "dec.out", h, 1, rng),
        };
        Ok(Self {
            params,
            n_genes,
            n_times,
            hidden: h,
            enc_dropout: cfg.encoder_dropout,
            dec_dropout: cfg.decoder_dropout,
            dt_input: cfg.decoder_dt_input,
            encoder,
            decoder,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_edges(&self) -> usize {
        self.n_genes * (self.n_genes - 1)
    }

    /// Parameters of the decoder's final linear layer.
    pub fn decoder_output(&self) -> Linear {
        self.decoder.out
    }

    /// Edge-type logits, `(sample, edge)` rows in [`edge_list`] order.
    ///
    /// `features` has one row per `(sample, gene)` holding that gene's series.
    pub fn encode<'t>(
        &self,
        tape: &'t Tape,
        features: &Tensor,
        graph: &BatchGraph,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let p = &self.params;
        let drop = self.enc_dropout;
        let x = tape.constant(features.clone())?;
        let pair = |h: Var<'t>| -> Result<Var<'t>> {
            let s = h.gather_rows(Rc::clone(&graph.senders))?;
            let r = h.gather_rows(Rc::clone(&graph.receivers))?;
            s.concat(&r)
        };
        match &self.encoder {
            EncoderNet::Mlp {
                emb,
                edge1,
                node1,
                edge2,
                out,
            } => {
                let h1 = emb.forward(tape, p, x, mode.dropout(drop))?;
                let e1 = edge1.forward(tape, p, pair(h1)?, mode.dropout(drop))?;
                let incoming = e1.scatter_add_rows(Rc::clone(&graph.receivers), graph.n_nodes)?;
                let h2 = node1.forward(tape, p, incoming, mode.dropout(drop))?;
                let e2 = edge2.forward(tape, p, pair(h2)?, mode.dropout(drop))?;
                out.forward(tape, p, e2)
            }
            EncoderNet::Gin {
                emb,
                eps,
                gnn,
                edge2,
                out,
            } => {
                let h1 = emb.forward(tape, p, x, mode.dropout(drop))?;
                let n_samples = graph.sample_of.last().map_or(0, |&s| s + 1);
                let totals = h1.scatter_add_rows(Rc::clone(&graph.sample_of), n_samples)?;
                let neighbours = totals.gather_rows(Rc::clone(&graph.sample_of))?.sub(&h1)?;
                let eps = tape.param(p, *eps)?;
                let agg = h1.add(&h1.scale_by(&eps)?)?.add(&neighbours)?;
                let h2 = gnn.forward(tape, p, agg, mode.dropout(drop))?;
                let e2 = edge2.forward(tape, p, pair(h2)?, mode.dropout(drop))?;
                out.forward(tape, p, e2)
            }
        }
    }

    /// One-step predictions `V + f_v(sum_s Z[s->r] f_e(V_r, V_s))`.
    ///
    /// `edge_weight` holds the edge-present weight of each `(sample, edge)`
    /// row; `graph` must replicate the samples over the transitions.
    pub fn decode<'t>(
        &self,
        tape: &'t Tape,
        batch: &DecoderBatch,
        edge_weight: Var<'t>,
        graph: &BatchGraph,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let p = &self.params;
        let v = tape.constant(batch.current.clone())?;
        let target = v.gather_rows(Rc::clone(&graph.receivers))?;
        let source = v.gather_rows(Rc::clone(&graph.senders))?;
        let msg = self.decoder.msg.forward(
            tape,
            p,
            target.concat(&source)?,
            mode.dropout(self.dec_dropout),
        )?;
        let z = edge_weight.gather_rows(Rc::clone(&graph.edge_of))?;
        let agg = msg
            .mul_col(&z)?
            .scatter_add_rows(Rc::clone(&graph.receivers), graph.n_nodes)?;
        let input = if self.dt_input {
            agg.concat(&tape.constant(batch.dt.clone())?)?
        } else {
            agg
        };
        let h = self
            .decoder
            .node
            .forward(tape, p, input, mode.dropout(self.dec_dropout))?;
        v.add(&self.decoder.out.forward(tape, p, h)?)
    }
}
