//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations as they run. [`Var`] handles are cheap
//! copies pointing into the tape. Parameters live in a [`ParamStore`] and are
//! bound to a fresh tape on every forward pass.

mod adam;
pub mod gradcheck;
mod nn;
mod tensor;

use std::cell::RefCell;
use std::rc::Rc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::error::{numeric, shape_err, Error, Result};

pub use adam::{Adam, AdamConfig};
pub use nn::{Linear, Mlp, ParamId, ParamStore};
pub use tensor::Tensor;

use tensor::{matmul, matmul_nt, matmul_tn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    AddConst(usize),
    Concat(usize, usize),
    Slice(usize, usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Softmax(usize, Axis),
    LogSoftmax(usize, Axis),
    Sum(usize),
    SumAxis(usize, Axis),
    Mean(usize),
    GatherRows(usize, Rc<[usize]>),
    ScatterRows(usize, Rc<[usize]>),
    Dropout(usize, Rc<[f64]>),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    grad: bool,
}

/// Define-by-run computation record. Not `Sync`; use one tape per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient for every parameter in `store`; unused parameters get zeros.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[pid.0].add_assign(g);
            }
        }
        out
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, grad: bool) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(numeric!("non-finite value produced by {}", op_name(&op)));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is tracked.
    pub fn variable(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&self, store: &ParamStore, id: ParamId) -> Result<Var<'_>> {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].grad
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Invalid("loss belongs to a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != [1, 1] {
            return Err(shape_err!("backward needs a scalar loss, got {shape:?}"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::scalar(1.0));
        let mut params = Vec::new();
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if let Op::Param(pid) = node.op {
                params.push((pid, id));
            }
            if !node.grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if !g.all_finite() {
                return Err(numeric!(
                    "non-finite gradient flowing into {}",
                    op_name(&node.op)
                ));
            }
            backprop(&nodes, id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sum_rows(t: &Tensor) -> Tensor {
    let mut out = vec![0.0; t.cols()];
    for i in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    Tensor::new(1, t.cols(), out).expect("shape")
}

fn sum_cols(t: &Tensor) -> Tensor {
    let data = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
    Tensor::new(t.rows(), 1, data).expect("shape")
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            if nodes[*a].grad {
                accumulate(grads, nodes, *a, matmul_nt(g, val(*b)));
            }
            if nodes[*b].grad {
                accumulate(grads, nodes, *b, matmul_tn(val(*a), g));
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            accumulate(grads, nodes, *a, g.zip_map(val(*b), |x, y| x * y));
            accumulate(grads, nodes, *b, g.zip_map(val(*a), |x, y| x * y));
        }
        Op::AddRow(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            if nodes[*b].grad {
                accumulate(grads, nodes, *b, sum_rows(g));
            }
        }
        Op::MulCol(a, c) => {
            let (av, cv) = (val(*a), val(*c));
            if nodes[*a].grad {
                let mut ga = g.clone();
                ga.for_rows_mut(|i, row| row.iter_mut().for_each(|x| *x *= cv.data()[i]));
                accumulate(grads, nodes, *a, ga);
            }
            if nodes[*c].grad {
                let data = g
                    .rows_iter()
                    .zip(av.rows_iter())
                    .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum())
                    .collect();
                accumulate(grads, nodes, *c, Tensor::new(av.rows(), 1, data)?);
            }
        }
        Op::Scale(a, s) => accumulate(grads, nodes, *a, g.map(|x| x * s)),
        Op::ScaleBy(a, s) => {
            let (av, sv) = (val(*a), val(*s).item());
            accumulate(grads, nodes, *a, g.map(|x| x * sv));
            if nodes[*s].grad {
                let d: f64 = g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum();
                accumulate(grads, nodes, *s, Tensor::scalar(d));
            }
        }
        Op::AddConst(a) => accumulate(grads, nodes, *a, g.clone()),
        Op::Concat(a, b) => {
            let ca = val(*a).cols();
            let cb = val(*b).cols();
            if nodes[*a].grad {
                accumulate(grads, nodes, *a, g.columns(0, ca));
            }
            if nodes[*b].grad {
                accumulate(grads, nodes, *b, g.columns(ca, ca + cb));
            }
        }
        Op::Slice(a, start) => {
            let av = val(*a);
            let (start, w) = (*start, g.cols());
            let ga = Tensor::from_fn(av.rows(), av.cols(), |i, j| {
                if j >= start && j < start + w {
                    g.get(i, j - start)
                } else {
                    0.0
                }
            });
            accumulate(grads, nodes, *a, ga);
        }
        Op::Relu(a) => {
            let ga = g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 });
            accumulate(grads, nodes, *a, ga);
        }
        Op::Tanh(a) => accumulate(grads, nodes, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
        Op::Exp(a) => accumulate(grads, nodes, *a, g.zip_map(out, |x, y| x * y)),
        Op::Log(a) => accumulate(grads, nodes, *a, g.zip_map(val(*a), |x, y| x / y)),
        Op::Square(a) => accumulate(grads, nodes, *a, g.zip_map(val(*a), |x, y| 2.0 * x * y)),
        Op::Softmax(a, axis) => {
            // dx = y * (g - <g, y>) along the axis.
            let gy = g.zip_map(out, |x, y| x * y);
            let dots = reduce(&gy, *axis);
            let ga = Tensor::from_fn(out.rows(), out.cols(), |i, j| {
                let d = pick(&dots, *axis, i, j);
                out.get(i, j) * (g.get(i, j) - d)
            });
            accumulate(grads, nodes, *a, ga);
        }
        Op::LogSoftmax(a, axis) => {
            let sums = reduce(g, *axis);
            let ga = Tensor::from_fn(out.rows(), out.cols(), |i, j| {
                g.get(i, j) - out.get(i, j).exp() * pick(&sums, *axis, i, j)
            });
            accumulate(grads, nodes, *a, ga);
        }
        Op::Sum(a) => {
            let av = val(*a);
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::full(av.rows(), av.cols(), g.item()),
            );
        }
        Op::SumAxis(a, axis) => {
            let av = val(*a);
            let ga = Tensor::from_fn(av.rows(), av.cols(), |i, j| pick(g, *axis, i, j));
            accumulate(grads, nodes, *a, ga);
        }
        Op::Mean(a) => {
            let av = val(*a);
            let s = g.item() / av.len() as f64;
            accumulate(grads, nodes, *a, Tensor::full(av.rows(), av.cols(), s));
        }
        Op::GatherRows(a, idx) => {
            let av = val(*a);
            let cols = av.cols();
            let mut ga = Tensor::zeros(av.rows(), cols);
            let data = ga.data_mut();
            for (k, &src) in idx.iter().enumerate() {
                for (o, v) in data[src * cols..(src + 1) * cols].iter_mut().zip(g.row(k)) {
                    *o += v;
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::ScatterRows(a, idx) => {
            let av = val(*a);
            let mut data = Vec::with_capacity(av.len());
            for &dst in idx.iter() {
                data.extend_from_slice(g.row(dst));
            }
            accumulate(grads, nodes, *a, Tensor::new(av.rows(), av.cols(), data)?);
        }
        Op::Dropout(a, mask) => {
            let ga = Tensor::new(
                g.rows(),
                g.cols(),
                g.data()
                    .iter()
                    .zip(mask.iter())
                    .map(|(x, m)| x * m)
                    .collect(),
            )?;
            accumulate(grads, nodes, *a, ga);
        }
    }
    Ok(())
}

/// Sum along `axis`: `Rows` collapses rows into a `1 × c` row, `Cols` collapses
/// columns into an `r × 1` column.
fn reduce(t: &Tensor, axis: Axis) -> Tensor {
    match axis {
        Axis::Rows => sum_rows(t),
        Axis::Cols => sum_cols(t),
    }
}

fn pick(reduced: &Tensor, axis: Axis, i: usize, j: usize) -> f64 {
    match axis {
        Axis::Rows => reduced.get(0, j),
        Axis::Cols => reduced.get(i, 0),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "input",
        Op::Param(_) => "parameter",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::MulCol(..) => "mul_col",
        Op::Scale(..) => "scale",
        Op::ScaleBy(..) => "scale_by",
        Op::AddConst(..) => "add_const",
        Op::Concat(..) => "concat",
        Op::Slice(..) => "slice",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Square(..) => "square",
        Op::Softmax(..) => "softmax",
        Op::LogSoftmax(..) => "log_softmax",
        Op::Sum(..) => "sum",
        Op::SumAxis(..) => "sum_axis",
        Op::Mean(..) => "mean",
        Op::GatherRows(..) => "gather_rows",
        Op::ScatterRows(..) => "scatter_add_rows",
        Op::Dropout(..) => "dropout",
    }
}

fn softmax_fwd(x: &Tensor, axis: Axis, log: bool) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = x.clone();
    let lanes: Vec<Vec<usize>> = match axis {
        Axis::Cols => (0..r)
            .map(|i| (0..c).map(|j| i * c + j).collect())
            .collect(),
        Axis::Rows => (0..c)
            .map(|j| (0..r).map(|i| i * c + j).collect())
            .collect(),
    };
    let data = out.data_mut();
    for lane in lanes {
        let max = lane
            .iter()
            .map(|&k| data[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lane.iter().map(|&k| (data[k] - max).exp()).sum();
        let lz = z.ln();
        for &k in &lane {
            let s = data[k] - max - lz;
            data[k] = if log { s } else { s.exp() };
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Invalid("operands live on different tapes".into()))
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Result<Var<'t>> {
        let g = self.tape.needs(self.id);
        self.tape.push(value, op, g)
    }

    fn binary(&self, other: &Var<'t>, value: Tensor, op: Op) -> Result<Var<'t>> {
        let g = self.tape.needs(self.id) || self.tape.needs(other.id);
        self.tape.push(value, op, g)
    }

    fn check_same(&self, other: &Var<'t>, what: &str) -> Result<()> {
        self.same_tape(other)?;
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(shape_err!("{what}: {a:?} vs {b:?}"));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(shape_err!("matmul: {:?} x {:?}", a.shape(), b.shape()));
        }
        self.binary(other, matmul(&a, &b), Op::MatMul(self.id, other.id))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check_same(other, "add")?;
        let v = self.value().zip_map(&other.value(), |x, y| x + y);
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check_same(other, "sub")?;
        let v = self.value().zip_map(&other.value(), |x, y| x - y);
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check_same(other, "mul")?;
        let v = self.value().zip_map(&other.value(), |x, y| x * y);
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    /// Adds a `1 × c` row to every row.
    pub fn add_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(row)?;
        let (a, b) = (self.value(), row.value());
        if b.rows() != 1 || b.cols() != a.cols() {
            return Err(shape_err!("add_row: {:?} + {:?}", a.shape(), b.shape()));
        }
        let mut v = (*a).clone();
        v.for_rows_mut(|_, r| r.iter_mut().zip(b.data()).for_each(|(x, y)| *x += y));
        self.binary(row, v, Op::AddRow(self.id, row.id))
    }

    /// Multiplies row `i` by the scalar `col[i]` of an `r × 1` column.
    pub fn mul_col(&self, col: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(col)?;
        let (a, c) = (self.value(), col.value());
        if c.cols() != 1 || c.rows() != a.rows() {
            return Err(shape_err!("mul_col: {:?} * {:?}", a.shape(), c.shape()));
        }
        let mut v = (*a).clone();
        v.for_rows_mut(|i, r| r.iter_mut().for_each(|x| *x *= c.data()[i]));
        self.binary(col, v, Op::MulCol(self.id, col.id))
    }

    pub fn scale(&self, s: f64) -> Result<Var<'t>> {
        self.unary(self.value().map(|x| x * s), Op::Scale(self.id, s))
    }

    /// Multiplies by a `1 × 1` variable.
    pub fn scale_by(&self, s: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(s)?;
        if s.shape() != [1, 1] {
            return Err(shape_err!("scale_by needs a scalar, got {:?}", s.shape()));
        }
        let sv = s.item();
        self.binary(s, self.value().map(|x| x * sv), Op::ScaleBy(self.id, s.id))
    }

    /// Adds a constant tensor of the same shape.
    pub fn add_const(&self, c: &Tensor) -> Result<Var<'t>> {
        if c.shape() != self.shape() {
            return Err(shape_err!(
                "add_const: {:?} + {:?}",
                self.shape(),
                c.shape()
            ));
        }
        let v = self.value().zip_map(c, |x, y| x + y);
        self.unary(v, Op::AddConst(self.id))
    }

    /// Column-wise concatenation.
    pub fn concat(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        if a.rows() != b.rows() {
            return Err(shape_err!("concat: {:?} | {:?}", a.shape(), b.shape()));
        }
        self.binary(other, Tensor::hstack(&a, &b), Op::Concat(self.id, other.id))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let a = self.value();
        if start >= end || end > a.cols() {
            return Err(shape_err!("slice {start}..{end} of {} columns", a.cols()));
        }
        self.unary(a.columns(start, end), Op::Slice(self.id, start))
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.unary(self.value().map(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.unary(self.value().map(f64::tanh), Op::Tanh(self.id))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary(self.value().map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(&self) -> Result<Var<'t>> {
        self.unary(self.value().map(f64::ln), Op::Log(self.id))
    }

    pub fn square(&self) -> Result<Var<'t>> {
        self.unary(self.value().map(|x| x * x), Op::Square(self.id))
    }

    pub fn softmax(&self, axis: Axis) -> Result<Var<'t>> {
        self.unary(
            softmax_fwd(&self.value(), axis, false),
            Op::Softmax(self.id, axis),
        )
    }

    pub fn log_softmax(&self, axis: Axis) -> Result<Var<'t>> {
        self.unary(
            softmax_fwd(&self.value(), axis, true),
            Op::LogSoftmax(self.id, axis),
        )
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Result<Var<'t>> {
        self.unary(Tensor::scalar(self.value().sum()), Op::Sum(self.id))
    }

    pub fn sum_axis(&self, axis: Axis) -> Result<Var<'t>> {
        self.unary(reduce(&self.value(), axis), Op::SumAxis(self.id, axis))
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let v = self.value();
        let m = v.sum() / v.len() as f64;
        self.unary(Tensor::scalar(m), Op::Mean(self.id))
    }

    /// Row `k` of the result is row `idx[k]` of `self`.
    pub fn gather_rows(&self, idx: Rc<[usize]>) -> Result<Var<'t>> {
        let a = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows()) {
            return Err(shape_err!("gather row {bad} of {}", a.rows()));
        }
        let cols = a.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            data.extend_from_slice(a.row(i));
        }
        let v = Tensor::new(idx.len(), cols, data)?;
        self.unary(v, Op::GatherRows(self.id, idx))
    }

    /// Sums row `k` of `self` into row `idx[k]` of an `n × c` result.
    pub fn scatter_add_rows(&self, idx: Rc<[usize]>, n: usize) -> Result<Var<'t>> {
        let a = self.value();
        if idx.len() != a.rows() {
            return Err(shape_err!("{} indices for {} rows", idx.len(), a.rows()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err!("scatter into row {bad} of {n}"));
        }
        let cols = a.cols();
        let mut v = Tensor::zeros(n, cols);
        let data = v.data_mut();
        for (k, &dst) in idx.iter().enumerate() {
            for (o, x) in data[dst * cols..(dst + 1) * cols].iter_mut().zip(a.row(k)) {
                *o += x;
            }
        }
        self.unary(v, Op::ScatterRows(self.id, idx))
    }

    /// Inverted dropout: zeroes entries with probability `rate`, rescales the rest.
    pub fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(*self);
        }
        let a = self.value();
        let keep = 1.0 / (1.0 - rate);
        // Compare 32-bit draws against the rate scaled to the full range.
        let cut = (rate * 4_294_967_296.0) as u64;
        let mask: Rc<[f64]> = (0..a.len())
            .map(|_| {
                if u64::from(rng.next_u32()) < cut {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let v = Tensor::new(
            a.rows(),
            a.cols(),
            a.data()
                .iter()
                .zip(mask.iter())
                .map(|(x, m)| x * m)
                .collect(),
        )?;
        self.unary(v, Op::Dropout(self.id, mask))
    }
}
