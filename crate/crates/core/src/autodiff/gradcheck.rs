//! Central finite-difference checks of reverse-mode gradients.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Axis, Linear, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::rng;

pub const STEP: f64 = 1e-5;
/// Magnitude below which differences are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Checks the gradient of `f` with respect to every scalar in `store`.
pub fn check_params<F>(name: &str, store: &ParamStore, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let analytic = {
        let tape = Tape::new();
        let loss = f(&tape, store)?;
        tape.backward(loss)?.for_params(store)
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        Ok(f(&tape, s)?.item())
    };
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    let mut n = 0;
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let x0 = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = x0 + STEP;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0 - STEP;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[id.0].data()[k], numeric));
            n += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        n_checked: n,
    })
}

/// Checks the gradient of `f` with respect to each input tensor.
pub fn check_inputs<F>(name: &str, inputs: &[Tensor], f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut store = ParamStore::new();
    for (i, t) in inputs.iter().enumerate() {
        store.add(format!("input{i}"), t.clone());
    }
    check_params(name, &store, |tape, s| {
        let vars = s
            .ids()
            .map(|id| tape.param(s, id))
            .collect::<Result<Vec<_>>>()?;
        f(tape, &vars)
    })
}

fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Contracts `v` with a fixed random weight so that every output entry matters.
fn project<'t>(v: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let [r, c] = v.shape();
    let mut rng = rng::stream(seed, 99);
    let w = v.tape.constant(random(r, c, -1.0, 1.0, &mut rng))?;
    v.mul(&w)?.sum()
}

/// Runs the finite-difference check on every primitive and on a random
/// three-layer perceptron.
pub fn primitive_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = rng::stream(seed, 0);
    let a34 = random(3, 4, -1.0, 1.0, &mut rng);
    let b34 = random(3, 4, -1.0, 1.0, &mut rng);
    let b45 = random(4, 5, -1.0, 1.0, &mut rng);
    let row4 = random(1, 4, -1.0, 1.0, &mut rng);
    let col3 = random(3, 1, -1.0, 1.0, &mut rng);
    let s11 = random(1, 1, 0.5, 1.5, &mut rng);
    let pos = random(3, 4, 0.5, 2.0, &mut rng);
    let c34 = random(3, 4, -1.0, 1.0, &mut rng);
    // Keep relu inputs away from the kink.
    let kinked = a34.map(|x| if x.abs() < 0.05 { x + 0.1 } else { x });
    let gather_idx: Rc<[usize]> = Rc::from(vec![2, 0, 2, 1, 0]);
    let scatter_idx: Rc<[usize]> = Rc::from(vec![1, 0, 1]);

    let mut out = Vec::new();
    macro_rules! unary {
        ($name:expr, $x:expr, |$v:ident| $body:expr) => {
            out.push(check_inputs($name, &[$x.clone()], |_, vs| {
                let $v = vs[0];
                project($body?, seed)
            })?);
        };
    }
    macro_rules! binary {
        ($name:expr, $x:expr, $y:expr, |$a:ident, $b:ident| $body:expr) => {
            out.push(check_inputs($name, &[$x.clone(), $y.clone()], |_, vs| {
                let ($a, $b) = (vs[0], vs[1]);
                project($body?, seed)
            })?);
        };
    }

    binary!("matmul", a34, b45, |a, b| a.matmul(&b));
    binary!("add", a34, b34, |a, b| a.add(&b));
    binary!("sub", a34, b34, |a, b| a.sub(&b));
    binary!("mul", a34, b34, |a, b| a.mul(&b));
    binary!("add_row", a34, row4, |a, b| a.add_row(&b));
    binary!("mul_col", a34, col3, |a, b| a.mul_col(&b));
    binary!("scale_by", a34, s11, |a, b| a.scale_by(&b));
    binary!("concat", a34, b34, |a, b| a.concat(&b));
    unary!("scale", a34, |v| v.scale(-1.7));
    unary!("add_const", a34, |v| v.add_const(&c34));
    unary!("slice", a34, |v| v.slice_cols(1, 3));
    unary!("relu", kinked, |v| v.relu());
    unary!("tanh", a34, |v| v.tanh());
    unary!("exp", a34, |v| v.exp());
    unary!("log", pos, |v| v.ln());
    unary!("square", a34, |v| v.square());
    unary!("softmax_rows", a34, |v| v.softmax(Axis::Rows));
    unary!("softmax_cols", a34, |v| v.softmax(Axis::Cols));
    unary!("log_softmax_rows", a34, |v| v.log_softmax(Axis::Rows));
    unary!("log_softmax_cols", a34, |v| v.log_softmax(Axis::Cols));
    unary!("sum_rows", a34, |v| v.sum_axis(Axis::Rows));
    unary!("sum_cols", a34, |v| v.sum_axis(Axis::Cols));
    out.push(check_inputs("sum", &[a34.clone()], |_, vs| {
        vs[0].square()?.sum()
    })?);
    out.push(check_inputs("mean", &[a34.clone()], |_, vs| {
        vs[0].square()?.mean()
    })?);
    unary!("gather_rows", a34, |v| v
        .gather_rows(Rc::clone(&gather_idx)));
    unary!("scatter_add_rows", a34, |v| v
        .scatter_add_rows(Rc::clone(&scatter_idx), 2));
    unary!("dropout", a34, |v| v
        .dropout(0.4, &mut rng::stream(seed, 7)));

    let mut store = ParamStore::new();
    let layers = [
        Linear::new(&mut store, "l0", 4, 6, &mut rng),
        Linear::new(&mut store, "l1", 6, 5, &mut rng),
        Linear::new(&mut store, "l2", 5, 2, &mut rng),
    ];
    let x = random(7, 4, -1.0, 1.0, &mut rng);
    out.push(check_params("mlp3", &store, |tape, s| {
        let mut h = tape.constant(x.clone())?;
        h = layers[0].forward(tape, s, h)?.tanh()?;
        h = layers[1].forward(tape, s, h)?.tanh()?;
        h = layers[2].forward(tape, s, h)?;
        project(h, seed)
    })?);
    Ok(out)
}
