//! Acceptance checks, one line per criterion. Runs without the libtest harness
//! so the PASS/FAIL lines always reach the output; exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use otgrn_core::autodiff::gradcheck::primitive_suite;
use otgrn_core::metrics::{auprc, auroc, epr, partial_correlation, ppcor_baseline};
use otgrn_core::nri::loss_gradcheck;
use otgrn_core::pipeline::{self, PipelineConfig, PipelineOutput};
use otgrn_core::rng;
use otgrn_core::simulate::{assemble_dataset, simulate_trajectories};
use otgrn_core::trajectory::compare_reconstructions;
use otgrn_core::transport::{
    solve_entropic_ot, transport_chain, CostMatrix, EpsilonSpec, MarginalPenalty, TransportConfig,
};
use otgrn_core::{EdgeProbabilityMatrix, GrnDefinition, SplitTag};

struct Outcome {
    passed: bool,
    detail: String,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> PipelineConfig {
    PipelineConfig::load(&configs_dir().join(name)).expect("bundled config loads")
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn sinkhorn_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(101, 0);
    let cfg = TransportConfig {
        epsilon: EpsilonSpec::Relative(0.01),
        marginal_penalty: MarginalPenalty::Balanced,
        ..TransportConfig::default()
    };
    let (mut worst_gap, mut worst_marginal) = (0.0f64, 0.0f64);
    let mut converged = 0;
    for i in 0..50 {
        let n = 1 + i % 5;
        let raw = Array2::from_shape_fn((n, n), |_| r.random::<f64>());
        let cost = CostMatrix::new(raw.clone()).unwrap();
        let plan = match solve_entropic_ot(&cost, &cfg) {
            Ok(p) => p,
            Err(e) => {
                return Outcome {
                    passed: false,
                    detail: format!("instance {i}: {e}"),
                }
            }
        };
        let lp = permutations(n)
            .iter()
            .map(|perm| {
                perm.iter()
                    .enumerate()
                    .map(|(p, &q)| raw[[p, q]])
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min);
        converged += usize::from(plan.converged);
        let got = (&plan.gamma * &raw).sum();
        worst_gap = worst_gap.max((got - lp).abs() / lp);
        let u = 1.0 / n as f64;
        let rows = plan
            .gamma
            .sum_axis(ndarray::Axis(1))
            .iter()
            .map(|s| (s - u).abs())
            .fold(0.0, f64::max);
        let cols = plan
            .gamma
            .sum_axis(ndarray::Axis(0))
            .iter()
            .map(|s| (s - u).abs())
            .fold(0.0, f64::max);
        worst_marginal = worst_marginal.max(rows).max(cols);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: worst_gap <= 0.02 && worst_marginal <= 1e-6 && secs < 5.0,
        detail: format!(
            "50 instances ({converged} converged), worst cost gap {:.3}% (<= 2%), worst marginal violation {worst_marginal:.1e} (<= 1e-6), {secs:.2} s (< 5 s)",
            100.0 * worst_gap
        ),
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut reports = match primitive_suite(0) {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    match loss_gradcheck(0) {
        Ok(r) => reports.extend(r),
        Err(e) => {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            }
        }
    }
    let worst = reports
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("non-empty suite");
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: reports.iter().all(|r| r.passed(1e-4)) && secs < 30.0,
        detail: format!(
            "{} checks, worst {} at {:.2e} (< 1e-4), {secs:.2} s (< 30 s)",
            reports.len(),
            worst.name,
            worst.max_rel_error
        ),
    }
}

fn trajectory_reconstruction() -> Outcome {
    let start = Instant::now();
    let cfg = load_config("mcad.json");
    let sim = cfg.simulate.clone().expect("simulated config");
    let grn = GrnDefinition::load_or_builtin(&cfg.network).unwrap();
    let run = || -> otgrn_core::Result<_> {
        let data = assemble_dataset(&simulate_trajectories(&grn, &sim)?, &sim)?;
        let truth = data.aligned_truth(SplitTag::Test)?;
        let plans = |c: &TransportConfig| -> otgrn_core::Result<Vec<_>> {
            Ok(transport_chain(&data.test, c)?
                .into_iter()
                .map(|s| s.plan)
                .collect())
        };
        let wot = plans(&cfg.transport)?;
        let ot = plans(&cfg.transport.plain_ot())?;
        compare_reconstructions(&data.test, &truth, &wot, Some(&ot), cfg.master_seed)
    };
    let report = match run() {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    let (w, o, r) = (
        report.wot.means(),
        report.ot.as_ref().unwrap().means(),
        report.random.means(),
    );
    let below_random = w.iter().zip(&r).all(|(w, r)| w < r);
    let ratio = report.wot.overall_mean() / report.random.overall_mean();
    let ordered = (0..w.len())
        .filter(|&i| w[i] <= o[i] && o[i] <= r[i])
        .count();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: below_random && ratio < 0.6 && ordered >= 5 && secs < 120.0,
        detail: format!(
            "wot {w:.3?} ot {o:.3?} random {r:.3?}; wot < random everywhere: {below_random}; \
             wot/random {ratio:.3} (< 0.6); wot <= ot <= random on {ordered}/{} (>= 5); {secs:.1} s (< 120 s)",
            w.len()
        ),
    }
}

struct Inference {
    mcad: otgrn_core::Result<PipelineOutput>,
    vsc: otgrn_core::Result<PipelineOutput>,
    secs: f64,
}

fn run_inference() -> Inference {
    let start = Instant::now();
    let mcad = pipeline::run(&load_config("mcad.json"));
    let vsc = pipeline::run(&load_config("vsc.json"));
    Inference {
        mcad,
        vsc,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn end_to_end(inf: &Inference) -> Outcome {
    let mut passed = inf.secs < 1800.0;
    let mut parts = Vec::new();
    for (name, out) in [("5-gene", &inf.mcad), ("8-gene", &inf.vsc)] {
        match out {
            Ok(out) => {
                let m = &out.summary.metrics;
                let a = m.aggregate;
                let margin = a.auroc_mean - 0.5;
                let ok = a.auroc_mean >= 0.65 && margin >= 3.0 * m.null.std_error;
                passed &= ok;
                parts.push(format!(
                    "{name}: auroc {:.3} ± {:.3} over {} seeds (>= 0.65), margin {margin:.3} vs 3 x null se {:.3}",
                    a.auroc_mean,
                    a.auroc_std,
                    a.n_seeds,
                    3.0 * m.null.std_error
                ));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    parts.push(format!("{:.0} s (< 1800 s)", inf.secs));
    Outcome {
        passed,
        detail: parts.join("; "),
    }
}

fn epr_sanity(inf: &Inference) -> Outcome {
    let pipeline_epr = match &inf.mcad {
        Ok(out) => out.summary.metrics.aggregate.epr_mean,
        Err(e) => {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    let truth = GrnDefinition::builtin("mcad-like")
        .unwrap()
        .adjacency_matrix();
    let g = truth.nrows();
    let mut r = rng::stream(55, 0);
    let draws = 1000;
    let mut total = 0.0;
    for _ in 0..draws {
        let scores =
            EdgeProbabilityMatrix::new(Array2::from_shape_fn((g, g), |_| r.random::<f64>()))
                .unwrap();
        total += epr(&scores, truth.view()).unwrap();
    }
    let mc = total / draws as f64;
    Outcome {
        passed: pipeline_epr > 1.0 && (mc - 1.0).abs() <= 0.05,
        detail: format!("pipeline epr {pipeline_epr:.3} (> 1), random-score epr {mc:.3} over {draws} draws (1 ± 0.05)"),
    }
}

/// Brute-force references: pair counting for AUROC, one threshold per distinct
/// score for AP, an explicit (score desc, index asc) ranking for EPR.
fn brute_force(scores: &Array2<f64>, truth: &Array2<u8>) -> (f64, f64, f64) {
    let g = scores.nrows();
    let mut items = Vec::new();
    for s in 0..g {
        for t in 0..g {
            if s != t {
                items.push((scores[[s, t]], truth[[s, t]] == 1));
            }
        }
    }
    let pos: Vec<f64> = items.iter().filter(|i| i.1).map(|i| i.0).collect();
    let neg: Vec<f64> = items.iter().filter(|i| !i.1).map(|i| i.0).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    let auroc = wins / (pos.len() as f64 * neg.len() as f64);

    let mut thresholds: Vec<f64> = items.iter().map(|i| i.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_tp) = (0.0, 0usize);
    for &th in &thresholds {
        let tp = items.iter().filter(|i| i.1 && i.0 >= th).count();
        let fp = items.iter().filter(|i| !i.1 && i.0 >= th).count();
        if tp > prev_tp {
            ap += (tp as f64 / (tp + fp) as f64) * ((tp - prev_tp) as f64 / pos.len() as f64);
        }
        prev_tp = tp;
    }

    let k = pos.len();
    let mut ranked: Vec<usize> = (0..items.len()).collect();
    ranked.sort_by(|&a, &b| items[b].0.total_cmp(&items[a].0).then(a.cmp(&b)));
    let hits = ranked[..k].iter().filter(|&&i| items[i].1).count();
    let epr = (hits * items.len()) as f64 / (k * k) as f64;
    (auroc, ap, epr)
}

fn metric_oracles() -> Outcome {
    let mut r = rng::stream(66, 0);
    let mut checked = 0;
    while checked < 100 {
        let g = r.random_range(5..=8);
        let truth =
            Array2::from_shape_fn((g, g), |(s, t)| u8::from(s != t && r.random::<f64>() < 0.3));
        let n_pos = truth.iter().filter(|&&v| v == 1).count();
        if n_pos == 0 || n_pos == g * (g - 1) {
            continue;
        }
        // Coarse grid so ties occur.
        let raw = Array2::from_shape_fn((g, g), |_| r.random_range(0..12) as f64 / 11.0);
        let scores = EdgeProbabilityMatrix::new(raw.clone()).unwrap();
        let got = (
            auroc(&scores, truth.view()).unwrap(),
            auprc(&scores, truth.view()).unwrap(),
            epr(&scores, truth.view()).unwrap(),
        );
        let mut masked = raw;
        masked.diag_mut().fill(0.0);
        let want = brute_force(&masked, &truth);
        if got != want {
            return Outcome {
                passed: false,
                detail: format!("instance {checked} (g = {g}): got {got:?}, reference {want:?}"),
            };
        }
        checked += 1;
    }
    Outcome {
        passed: true,
        detail:
            "auroc, auprc, epr identical to brute force on 100 random 5-8 gene instances with ties"
                .into(),
    }
}

fn ppcor_checks() -> Outcome {
    let cfg = load_config("mcad.json");
    let sim = cfg.simulate.clone().unwrap();
    let grn = GrnDefinition::builtin("mcad-like").unwrap();
    let data = assemble_dataset(&simulate_trajectories(&grn, &sim).unwrap(), &sim).unwrap();
    let (a, b) = (
        ppcor_baseline(&data.train).unwrap(),
        ppcor_baseline(&data.train).unwrap(),
    );
    let deterministic = a.scores == b.scores;
    let p = a.scores.probs();
    let symmetric = (0..p.nrows()).all(|s| (0..p.ncols()).all(|t| p[[s, t]] == p[[t, s]]));

    let mut r = rng::stream(77, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 50;
        let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 * v + 0.3 * r.random::<f64>())
            .collect();
        let data = Array2::from_shape_fn((2, n), |(i, j)| if i == 0 { x[j] } else { y[j] });
        let rho = partial_correlation(data.view()).unwrap().rho[[0, 1]];
        let (mx, my) = (
            x.iter().sum::<f64>() / n as f64,
            y.iter().sum::<f64>() / n as f64,
        );
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        worst = worst.max((rho - sxy / (sxx * syy).sqrt()).abs());
    }
    Outcome {
        passed: deterministic && symmetric && worst <= 1e-12,
        detail: format!(
            "deterministic: {deterministic}, symmetric: {symmetric}, g = 2 vs Pearson max |diff| {worst:.1e} (<= 1e-12)"
        ),
    }
}

fn reproducibility() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for dir in &dirs {
        let mut cfg = load_config("reproducibility.json");
        cfg.output_dir = Some(dir.path().to_path_buf());
        if let Err(e) = pipeline::run(&cfg) {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            };
        }
        files.push(std::fs::read(dir.path().join("metrics_summary.json")).unwrap());
    }
    Outcome {
        passed: files[0] == files[1],
        detail: format!(
            "two runs, metrics_summary.json {} bytes, identical: {}",
            files[0].len(),
            files[0] == files[1]
        ),
    }
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |id, name, o: Outcome| {
        println!(
            "criterion {id} [{}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    report(1, "sinkhorn correctness", sinkhorn_correctness());
    report(2, "gradient fidelity", gradient_fidelity());
    report(3, "trajectory reconstruction", trajectory_reconstruction());
    let inference = run_inference();
    report(4, "end-to-end inference", end_to_end(&inference));
    report(5, "epr sanity", epr_sanity(&inference));
    report(6, "metric oracles", metric_oracles());
    report(7, "ppcor baseline", ppcor_checks());
    report(8, "reproducibility", reproducibility());

    let failed: Vec<u8> = results
        .iter()
        .filter(|r| !r.2.passed)
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
