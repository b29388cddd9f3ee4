//! Entropic optimal transport between consecutive snapshots.
//!
//! The solver minimizes `Σ γ M + ε Σ γ log γ` with uniform marginals. In
//! balanced mode both marginals are hard constraints (classical Sinkhorn).
//! With a finite penalty `λ` the source marginal is relaxed by a KL term and
//! its scaling update is raised to `λ / (λ + ε)`; `relax_target` relaxes the
//! target marginal the same way. Row sums of the relaxed plan are read as
//! per-cell growth rates and fed back as the next source marginal.

mod config;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::{ExpressionMatrix, SnapshotDataset};
use crate::error::{invalid, numeric, shape_err, Result};

pub use config::{EpsilonSpec, MarginalPenalty, Stabilization, TransportConfig};

/// Pairwise Euclidean distances between source cells (rows) and target cells (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    source_time: f64,
    target_time: f64,
}

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_times(values, 0.0, 1.0)
    }

    pub fn with_times(values: Array2<f64>, source_time: f64, target_time: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid!("empty cost matrix"));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid!(
                "cost entries must be finite and >= 0, found {bad}"
            ));
        }
        Ok(Self {
            values,
            source_time,
            target_time,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// `M[p, q] = ‖X_i[:, p] − X_j[:, q]‖₂`.
pub fn compute_cost_matrix(
    source: &ExpressionMatrix,
    target: &ExpressionMatrix,
) -> Result<CostMatrix> {
    compute_scaled_cost_matrix(source, target, None)
}

/// Cost matrix after dividing gene `r` by `gene_scales[r]` in both snapshots.
pub fn compute_scaled_cost_matrix(
    source: &ExpressionMatrix,
    target: &ExpressionMatrix,
    gene_scales: Option<&[f64]>,
) -> Result<CostMatrix> {
    let g = source.n_genes();
    if target.n_genes() != g {
        return Err(shape_err!(
            "gene dimension mismatch: {} vs {}",
            g,
            target.n_genes()
        ));
    }
    if let Some(scales) = gene_scales {
        if scales.len() != g || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid!("gene scales must be {g} positive finite values"));
        }
    }
    let scale = |r: usize| gene_scales.map_or(1.0, |s| 1.0 / s[r]);
    let x = source.values();
    let y = target.values();
    let values = Array2::from_shape_fn((source.n_cells(), target.n_cells()), |(p, q)| {
        (0..g)
            .map(|r| {
                let d = (x[[r, p]] - y[[r, q]]) * scale(r);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    });
    CostMatrix::with_times(values, source.time(), target.time())
}

/// Per-gene standard deviation over every cell of every snapshot.
pub fn pooled_gene_scales(ds: &SnapshotDataset) -> Vec<f64> {
    let g = ds.n_genes();
    let mut sum = vec![0.0; g];
    let mut sq = vec![0.0; g];
    let mut n = 0usize;
    for snap in ds.snapshots() {
        for (r, row) in snap.values().outer_iter().enumerate() {
            sum[r] += row.sum();
            sq[r] += row.dot(&row);
        }
        n += snap.n_cells();
    }
    (0..g)
        .map(|r| {
            let mean = sum[r] / n as f64;
            let var = (sq[r] / n as f64 - mean * mean).max(0.0);
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// A coupling between the cells of two snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    #[serde(skip)]
    pub gamma: Array2<f64>,
    pub epsilon: f64,
    pub source_time: f64,
    pub target_time: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm deviation of row and column sums from the requested marginals.
    pub marginal_error: f64,
    pub log_domain: bool,
    /// Source marginal the plan was solved against.
    #[serde(skip)]
    pub source_marginal: Array1<f64>,
    /// Row-marginal error after each sweep.
    #[serde(skip)]
    pub marginal_history: Vec<f64>,
}

impl TransportPlan {
    pub fn total_mass(&self) -> f64 {
        self.gamma.sum()
    }

    /// `Σ γ M`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        (&self.gamma * &cost.values()).sum()
    }

    /// `Σ γ M + ε Σ γ log γ`, with `0 log 0 = 0`.
    pub fn objective(&self, cost: &CostMatrix) -> f64 {
        entropic_objective(self.gamma.view(), cost.values(), self.epsilon)
    }
}

pub fn entropic_objective(gamma: ArrayView2<f64>, cost: ArrayView2<f64>, epsilon: f64) -> f64 {
    gamma
        .iter()
        .zip(cost.iter())
        .map(|(&g, &m)| g * m + if g > 0.0 { epsilon * g * g.ln() } else { 0.0 })
        .sum()
}

/// Per-source-cell growth rates: outgoing mass over incoming mass, `Σ_q γ[p, q] / a_p`.
/// With the uniform source marginal this is `c_i · Σ_q γ[p, q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthVector(pub Array1<f64>);

impl GrowthVector {
    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }
}

/// Solves with uniform marginals `1/c_i` and `1/c_j`.
pub fn solve_entropic_ot(cost: &CostMatrix, cfg: &TransportConfig) -> Result<TransportPlan> {
    let (n, m) = cost.dim();
    let a = Array1::from_elem(n, 1.0 / n as f64);
    let b = Array1::from_elem(m, 1.0 / m as f64);
    solve_with_marginals(cost, a.view(), b.view(), cfg)
}

/// Sinkhorn scaling with explicit marginals.
pub fn solve_with_marginals(
    cost: &CostMatrix,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cfg: &TransportConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m {
        return Err(shape_err!(
            "marginals of length {}/{} for a {n}x{m} cost",
            a.len(),
            b.len()
        ));
    }
    if a.iter()
        .chain(b.iter())
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(invalid!("marginals must be finite and nonnegative"));
    }
    let mean = cost.mean();
    let epsilon = cfg.epsilon.resolve(if mean > 0.0 { mean } else { 1.0 });
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid!("resolved epsilon {epsilon} is not positive"));
    }
    let log_domain = match cfg.stabilization {
        Stabilization::Log => true,
        Stabilization::Direct => false,
        Stabilization::Auto => epsilon < 0.01 * mean,
    };
    let fa = cfg.marginal_penalty.exponent(epsilon);
    let fb = if cfg.relax_target { fa } else { 1.0 };
    let solver = Sinkhorn {
        cost: cost.values(),
        a,
        b,
        epsilon,
        fa,
        fb,
        max_iters: cfg.max_inner_iters,
        tol: cfg.inner_tol,
    };
    let state = if log_domain {
        solver.run_log()?
    } else {
        solver.run_direct()?
    };

    let gamma = state.gamma;
    if let Some(p) = gamma
        .outer_iter()
        .position(|row| row.iter().all(|&v| v == 0.0))
    {
        if a[p] > 0.0 {
            return Err(numeric!(
                "transport plan row {p} underflowed to zero (epsilon {epsilon:.3e} too small for costs of mean {mean:.3e})"
            ));
        }
    }
    let rows = gamma.sum_axis(Axis(1));
    let cols = gamma.sum_axis(Axis(0));
    let marginal_error = rows
        .iter()
        .zip(a.iter())
        .chain(cols.iter().zip(b.iter()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if !state.converged {
        log::warn!(
            "sinkhorn hit max_inner_iters = {} (marginal error {marginal_error:.3e})",
            cfg.max_inner_iters
        );
    }
    Ok(TransportPlan {
        gamma,
        epsilon,
        source_time: cost.source_time,
        target_time: cost.target_time,
        converged: state.converged,
        iterations: state.iterations,
        marginal_error,
        log_domain,
        source_marginal: a.to_owned(),
        marginal_history: state.history,
    })
}

#[derive(Clone, Copy)]
struct Sinkhorn<'a> {
    cost: ArrayView2<'a, f64>,
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
    epsilon: f64,
    fa: f64,
    fb: f64,
    max_iters: usize,
    tol: f64,
}

struct SinkhornState {
    gamma: Array2<f64>,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
}

fn log_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Largest change between two log-scaling vectors, treating equal infinities as unchanged.
fn log_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(o, n)| if o == n { 0.0 } else { (o - n).abs() })
        .fold(0.0, f64::max)
}

impl Sinkhorn<'_> {
    fn run_direct(&self) -> Result<SinkhornState> {
        let (n, m) = self.cost.dim();
        let kernel = self.cost.mapv(|c| (-c / self.epsilon).exp());
        if kernel.iter().all(|&k| k == 0.0) {
            return Err(numeric!(
                "kernel exp(-M/epsilon) underflowed to all zeros (epsilon {:.3e})",
                self.epsilon
            ));
        }
        let mut u = vec![1.0; n];
        let mut v = vec![1.0; m];
        let mut log_u = vec![0.0; n];
        let mut log_v = vec![0.0; m];
        let mut history = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut kv = vec![0.0; n];
        let mut ktu = vec![0.0; m];
        while iterations < self.max_iters {
            iterations += 1;
            for p in 0..n {
                kv[p] = dot(kernel.row(p).as_slice().expect("contiguous kernel"), &v);
            }
            if iterations > 1 {
                history.push(
                    (0..n)
                        .map(|p| (u[p] * kv[p] - self.a[p]).abs())
                        .fold(0.0, f64::max),
                );
            }
            let mut new_log_u = vec![0.0; n];
            for p in 0..n {
                if self.a[p] > 0.0 && kv[p] <= 0.0 {
                    return Err(numeric!(
                        "kernel row {p} underflowed; use a larger epsilon or log-domain stabilization"
                    ));
                }
                u[p] = if self.a[p] > 0.0 {
                    (self.a[p] / kv[p]).powf(self.fa)
                } else {
                    0.0
                };
                new_log_u[p] = log_or_neg_inf(u[p]);
            }
            ktu.iter_mut().for_each(|x| *x = 0.0);
            for p in 0..n {
                if u[p] == 0.0 {
                    continue;
                }
                for (q, k) in kernel.row(p).iter().enumerate() {
                    ktu[q] += k * u[p];
                }
            }
            let mut new_log_v = vec![0.0; m];
            for q in 0..m {
                if self.b[q] > 0.0 && ktu[q] <= 0.0 {
                    return Err(numeric!(
                        "kernel column {q} underflowed; use a larger epsilon or log-domain stabilization"
                    ));
                }
                v[q] = if self.b[q] > 0.0 {
                    (self.b[q] / ktu[q]).powf(self.fb)
                } else {
                    0.0
                };
                new_log_v[q] = log_or_neg_inf(v[q]);
            }
            if u.iter().chain(&v).any(|x| !x.is_finite()) {
                return Err(numeric!(
                    "sinkhorn scaling overflowed at iteration {iterations}"
                ));
            }
            let change = log_change(&log_u, &new_log_u).max(log_change(&log_v, &new_log_v));
            log_u = new_log_u;
            log_v = new_log_v;
            if change < self.tol {
                converged = true;
                break;
            }
        }
        let polished = if converged {
            None
        } else {
            self.refine(&mut log_u, &mut log_v)?
        };
        converged |= polished.is_some();
        let gamma = polished.unwrap_or_else(|| {
            Array2::from_shape_fn((n, m), |(p, q)| u[p] * kernel[[p, q]] * v[q])
        });
        Ok(SinkhornState {
            gamma,
            converged,
            iterations,
            history,
        })
    }

    fn run_log(&self) -> Result<SinkhornState> {
        let (n, m) = self.cost.dim();
        // Dual potentials divided by epsilon, i.e. log scaling vectors.
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; m];
        let mut history = Vec::new();
        let (mut converged, iterations) = self.log_sweeps(&mut f, &mut g, Some(&mut history))?;
        let polished = if converged {
            None
        } else {
            self.refine(&mut f, &mut g)?
        };
        converged |= polished.is_some();
        let gamma = polished.unwrap_or_else(|| {
            Array2::from_shape_fn((n, m), |(p, q)| {
                (f[p] - self.cost[[p, q]] / self.epsilon + g[q]).exp()
            })
        });
        Ok(SinkhornState {
            gamma,
            converged,
            iterations,
            history,
        })
    }

    /// Log-domain Sinkhorn sweeps from the given log scalings. Returns whether
    /// `tol` was reached and the number of sweeps.
    fn log_sweeps(
        &self,
        f: &mut Vec<f64>,
        g: &mut Vec<f64>,
        mut history: Option<&mut Vec<f64>>,
    ) -> Result<(bool, usize)> {
        let (n, m) = self.cost.dim();
        let eps = self.epsilon;
        let log_a: Vec<f64> = self.a.iter().map(|&x| log_or_neg_inf(x)).collect();
        let log_b: Vec<f64> = self.b.iter().map(|&x| log_or_neg_inf(x)).collect();
        let scaled = self.cost.mapv(|c| -c / eps);
        let mut iterations = 0;
        let mut buf = vec![0.0; m.max(n)];
        while iterations < self.max_iters {
            iterations += 1;
            let mut new_f = vec![0.0; n];
            for p in 0..n {
                let row = scaled.row(p);
                for q in 0..m {
                    buf[q] = row[q] + g[q];
                }
                let lse = log_sum_exp(&buf[..m]);
                if let Some(history) = history.as_deref_mut().filter(|_| iterations > 1) {
                    // Row mass after the previous sweep.
                    let mass = (f[p] + lse).exp();
                    let err = (mass - self.a[p]).abs();
                    if p == 0 {
                        history.push(err);
                    } else if let Some(last) = history.last_mut() {
                        *last = last.max(err);
                    }
                }
                new_f[p] = if log_a[p].is_finite() {
                    self.fa * (log_a[p] - lse)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let mut new_g = vec![0.0; m];
            for q in 0..m {
                for p in 0..n {
                    buf[p] = scaled[[p, q]] + new_f[p];
                }
                let lse = log_sum_exp(&buf[..n]);
                new_g[q] = if log_b[q].is_finite() {
                    self.fb * (log_b[q] - lse)
                } else {
                    f64::NEG_INFINITY
                };
            }
            if new_f
                .iter()
                .chain(&new_g)
                .any(|x| x.is_nan() || *x == f64::INFINITY)
            {
                return Err(numeric!(
                    "log-domain sinkhorn produced NaN at iteration {iterations}"
                ));
            }
            let change = log_change(f, &new_f).max(log_change(g, &new_g));
            *f = new_f;
            *g = new_g;
            if change < self.tol {
                return Ok((true, iterations));
            }
        }
        Ok((false, iterations))
    }

    fn polish_eligible(&self) -> bool {
        let (n, m) = self.cost.dim();
        let mass_a = self.a.sum();
        self.fa == 1.0
            && self.fb == 1.0
            && n + m <= NEWTON_MAX_DIM
            && self.a.iter().chain(self.b.iter()).all(|&x| x > 0.0)
            && (mass_a - self.b.sum()).abs() <= 1e-12 * mass_a
    }

    /// Fallback for a balanced problem that exhausted its sweep budget: Newton
    /// polish from the current scalings, then, if that fails, epsilon annealing
    /// from the scale of the cost range with warm-started potentials, finished by
    /// another polish at the target epsilon.
    fn refine(&self, f: &mut Vec<f64>, g: &mut Vec<f64>) -> Result<Option<Array2<f64>>> {
        if !self.polish_eligible() {
            return Ok(None);
        }
        if let Some(plan) = self.newton_polish(f, g) {
            return Ok(Some(plan));
        }
        let range = self.cost.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - self.cost.iter().copied().fold(f64::INFINITY, f64::min);
        let mut stages = 0;
        while self.epsilon * 2f64.powi(stages) < range && stages < 60 {
            stages += 1;
        }
        let (mut af, mut ag) = (vec![0.0; f.len()], vec![0.0; g.len()]);
        let mut prev_eps = self.epsilon * 2f64.powi(stages);
        for k in (0..=stages).rev() {
            let stage = Sinkhorn {
                epsilon: self.epsilon * 2f64.powi(k),
                ..*self
            };
            let ratio = prev_eps / stage.epsilon;
            af.iter_mut().chain(ag.iter_mut()).for_each(|x| *x *= ratio);
            prev_eps = stage.epsilon;
            stage.log_sweeps(&mut af, &mut ag, None)?;
        }
        let plan = self.newton_polish(&mut af, &mut ag);
        if plan.is_some() {
            *f = af;
            *g = ag;
        }
        Ok(plan)
    }

    /// Damped Newton iterations on the marginal residual of a balanced problem,
    /// started from the Sinkhorn log scalings. Returns the plan if the relative
    /// marginal error drops below `tol`.
    fn newton_polish(&self, f: &mut [f64], g: &mut [f64]) -> Option<Array2<f64>> {
        let (n, m) = self.cost.dim();
        if !self.polish_eligible() || f.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return None;
        }
        let scaled = self.cost.mapv(|c| -c / self.epsilon);
        let eval = |f: &[f64], g: &[f64]| {
            let plan = Array2::from_shape_fn((n, m), |(p, q)| (f[p] + scaled[[p, q]] + g[q]).exp());
            let rows = plan.sum_axis(Axis(1));
            let cols = plan.sum_axis(Axis(0));
            let mut res: Vec<f64> = rows.iter().zip(self.a.iter()).map(|(r, a)| r - a).collect();
            res.extend(cols.iter().zip(self.b.iter()).map(|(c, b)| c - b));
            let rel = res
                .iter()
                .zip(self.a.iter().chain(self.b.iter()))
                .map(|(r, w)| (r / w).abs())
                .fold(0.0, f64::max);
            let norm = res.iter().map(|r| r * r).sum::<f64>().sqrt();
            (plan, rows, cols, res, rel, norm)
        };
        let (mut plan, mut rows, mut cols, mut res, mut rel, mut norm) = eval(f, g);
        // The last target scaling is pinned to remove the shift invariance.
        let k = n + m - 1;
        for _ in 0..NEWTON_MAX_STEPS {
            if rel < self.tol {
                return Some(plan);
            }
            let jac = DMatrix::from_fn(k, k, |i, j| match (i < n, j < n) {
                (true, true) => {
                    if i == j {
                        rows[i]
                    } else {
                        0.0
                    }
                }
                (true, false) => plan[[i, j - n]],
                (false, true) => plan[[j, i - n]],
                (false, false) => {
                    if i == j {
                        cols[i - n]
                    } else {
                        0.0
                    }
                }
            });
            let rhs = DVector::from_fn(k, |i, _| -res[i]);
            let step = jac.lu().solve(&rhs)?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let nf: Vec<f64> = (0..n).map(|p| f[p] + t * step[p]).collect();
                let ng: Vec<f64> = (0..m)
                    .map(|q| g[q] + if q + 1 < m { t * step[n + q] } else { 0.0 })
                    .collect();
                let trial = eval(&nf, &ng);
                if trial.5.is_finite() && trial.5 <= (1.0 - 1e-4 * t) * norm {
                    f.copy_from_slice(&nf);
                    g.copy_from_slice(&ng);
                    (plan, rows, cols, res, rel, norm) = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        (rel < self.tol).then_some(plan)
    }
}

const NEWTON_MAX_DIM: usize = 1000;
const NEWTON_MAX_STEPS: usize = 50;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Growth rates read off a plan's row sums relative to its source marginal, so a
/// balanced plan gives 1 for every cell. Cells with zero source mass get 0.
pub fn growth_rates(plan: &TransportPlan) -> GrowthVector {
    let rows = plan.gamma.sum_axis(Axis(1));
    let a = &plan.source_marginal;
    GrowthVector(Array1::from_shape_fn(rows.len(), |p| {
        if a[p] > 0.0 {
            rows[p] / a[p]
        } else {
            0.0
        }
    }))
}

/// Final state of one growth-reweighted transport solve.
#[derive(Debug, Clone)]
pub struct WotSolution {
    pub plan: TransportPlan,
    pub growth: GrowthVector,
    /// Number of reweighting rounds actually run.
    pub growth_rounds: usize,
    pub growth_converged: bool,
}

/// Next source marginal `g_p^Δt / Σ g^Δt`.
pub fn reweighted_marginal(growth: &GrowthVector, dt: f64) -> Result<Array1<f64>> {
    let powered = growth.0.mapv(|x| x.powf(dt));
    let total = powered.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(numeric!(
            "degenerate growth marginal (sum of g^dt = {total})"
        ));
    }
    Ok(powered / total)
}

/// Transport with iterative growth reweighting of the source marginal.
pub fn wot_solve(
    source: &ExpressionMatrix,
    target: &ExpressionMatrix,
    cfg: &TransportConfig,
) -> Result<WotSolution> {
    let cost = compute_cost_matrix(source, target)?;
    wot_solve_cost(&cost, cfg)
}

pub fn wot_solve_cost(cost: &CostMatrix, cfg: &TransportConfig) -> Result<WotSolution> {
    let dt = cost.target_time - cost.source_time;
    if !(dt > 0.0) {
        return Err(invalid!("target time must follow source time (dt = {dt})"));
    }
    let (_, m) = cost.dim();
    let b = Array1::from_elem(m, 1.0 / m as f64);
    let mut plan = solve_entropic_ot(cost, cfg)?;
    let mut growth = growth_rates(&plan);
    let mut rounds = 0;
    let mut growth_converged = cfg.growth_iters == 0;
    while rounds < cfg.growth_iters {
        rounds += 1;
        let a = reweighted_marginal(&growth, dt)?;
        plan = solve_with_marginals(cost, a.view(), b.view(), cfg)?;
        let next = growth_rates(&plan);
        let change = next
            .0
            .iter()
            .zip(growth.0.iter())
            .map(|(n, o)| (n - o).abs() / o.abs().max(1e-12))
            .fold(0.0, f64::max);
        growth = next;
        if change < cfg.growth_tol {
            growth_converged = true;
            break;
        }
    }
    Ok(WotSolution {
        plan,
        growth,
        growth_rounds: rounds,
        growth_converged,
    })
}

/// Solves every consecutive pair of a dataset. Pairs run in parallel; each
/// solve is sequential, so results do not depend on the thread count.
pub fn transport_chain(ds: &SnapshotDataset, cfg: &TransportConfig) -> Result<Vec<WotSolution>> {
    cfg.validate()?;
    let scales = cfg.zscore.then(|| pooled_gene_scales(ds));
    (0..ds.n_times() - 1)
        .into_par_iter()
        .map(|i| {
            let cost =
                compute_scaled_cost_matrix(ds.snapshot(i), ds.snapshot(i + 1), scales.as_deref())?;
            wot_solve_cost(&cost, cfg)
        })
        .collect()
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}
