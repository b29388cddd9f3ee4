//! End-to-end experiment driver: simulate (or load) snapshots, couple them with
//! growth-reweighted transport, stitch trajectories, train the edge model under
//! several seeds, and score everything against the known network.
//!
//! Input paths inside a configuration file are resolved relative to the file.
//! Outputs are written stage by stage, so a failing stage leaves the earlier
//! results on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    load_dataset, save_dataset_as, save_edges_csv, save_matrix_csv, save_trajectories_csv,
    GrnDefinition, SnapshotDataset, SplitTag, TrajectorySet,
};
use crate::error::{invalid, Error, Result};
use crate::metrics::{self, MetricsReport, NullSummary};
use crate::nri::{self, EpochLog, NriConfig};
use crate::rng::{derive_seed, tags};
use crate::simulate::{assemble_dataset, simulate_trajectories, SimulationConfig};
use crate::trajectory::{compare_reconstructions, stitch_trajectories, ReconstructionReport};
use crate::transport::{transport_chain, TransportConfig, TransportPlan, WotSolution};

fn default_network() -> String {
    "mcad-like".to_owned()
}

fn default_n_seeds() -> usize {
    10
}

fn default_null_repetitions() -> usize {
    200
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub master_seed: u64,
    /// Built-in network name or path to a network JSON file. Drives simulation and scoring.
    #[serde(default = "default_network")]
    pub network: String,
    /// Existing snapshot manifest. Mutually exclusive with `simulate`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Simulation settings; its `master_seed` is replaced by the pipeline master seed.
    #[serde(default)]
    pub simulate: Option<SimulationConfig>,
    #[serde(default)]
    pub transport: TransportConfig,
    /// Template for every seeded run; `seed` is replaced per run.
    #[serde(default)]
    pub nri: NriConfig,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_null_repetitions")]
    pub null_repetitions: usize,
    /// Also solve plain balanced transport on the held-out split for comparison.
    #[serde(default = "default_true")]
    pub compare_plain_ot: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            network: default_network(),
            dataset: None,
            simulate: None,
            transport: TransportConfig::default(),
            nri: NriConfig::default(),
            n_seeds: default_n_seeds(),
            null_repetitions: default_null_repetitions(),
            compare_plain_ot: true,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Parses a configuration and fills in every default.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| invalid!("configuration is not valid JSON: {e}"))?;
        if let Some(obj) = raw.as_object() {
            if obj.contains_key("dataset") && obj.contains_key("simulate") {
                return Err(invalid!(
                    "conflicting keys: `dataset` and `simulate` are mutually exclusive"
                ));
            }
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(raw).map_err(|e| invalid!("configuration: {e}"))?;
        if let Some(base) = base_dir {
            cfg.dataset = cfg.dataset.map(|p| base.join(p));
            if !GrnDefinition::is_builtin(&cfg.network) {
                cfg.network = base.join(&cfg.network).to_string_lossy().into_owned();
            }
        }
        cfg.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent())
    }

    /// Fills the simulation block when no dataset is given, applies the master
    /// seed, and validates every section.
    pub fn resolve(mut self) -> Result<Self> {
        if self.dataset.is_some() && self.simulate.is_some() {
            return Err(invalid!(
                "conflicting keys: `dataset` and `simulate` are mutually exclusive"
            ));
        }
        if self.dataset.is_none() {
            let mut sim = self.simulate.take().unwrap_or_default();
            sim.master_seed = self.master_seed;
            sim.validate()?;
            self.simulate = Some(sim);
        }
        if self.n_seeds == 0 {
            return Err(invalid!("n_seeds must be positive"));
        }
        if self.null_repetitions == 0 {
            return Err(invalid!("null_repetitions must be positive"));
        }
        self.transport.validate()?;
        self.nri.seed = 0;
        self.nri.validate()?;
        Ok(self)
    }

    /// Training seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, &[tags::PIPELINE_SEED, index as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub index: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub final_epoch: Option<EpochLog>,
}

/// Mean and population standard deviation of each metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_seeds: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    pub epr_mean: f64,
    pub epr_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_reports(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(invalid!("no reports to aggregate"));
        }
        let pick =
            |f: fn(&MetricsReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        let (auroc_mean, auroc_std) = pick(|r| r.auroc);
        let (auprc_mean, auprc_std) = pick(|r| r.auprc);
        let (epr_mean, epr_std) = pick(|r| r.epr);
        Ok(Self {
            n_seeds: reports.len(),
            auroc_mean,
            auroc_std,
            auprc_mean,
            auprc_std,
            epr_mean,
            epr_std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub source_time: f64,
    pub target_time: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_error: f64,
    pub growth_rounds: usize,
    pub growth_converged: bool,
}

impl PairDiagnostics {
    fn from_solution(s: &WotSolution) -> Self {
        Self {
            source_time: s.plan.source_time,
            target_time: s.plan.target_time,
            epsilon: s.plan.epsilon,
            iterations: s.plan.iterations,
            converged: s.plan.converged,
            marginal_error: s.plan.marginal_error,
            growth_rounds: s.growth_rounds,
            growth_converged: s.growth_converged,
        }
    }
}

/// Everything that depends only on the configuration and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub master_seed: u64,
    pub network: String,
    pub per_seed: Vec<SeedRun>,
    pub aggregate: Aggregate,
    /// Shuffled-truth AUROC distribution for the per-seed predictions.
    pub null: NullSummary,
    pub ppcor: MetricsReport,
    /// Held-out reconstruction errors; present when the data were simulated.
    pub reconstruction: Option<ReconstructionReport>,
    pub transport: Vec<PairDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: PipelineConfig,
    pub metrics: MetricsSummary,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

/// In-memory results of a run, beyond what the summary records.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub summary: Summary,
    pub trajectories: TrajectorySet,
    pub predictions: Vec<crate::EdgeProbabilityMatrix>,
}

struct Stopwatch {
    timings: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("stage {stage}");
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        });
        self.timings
            .insert(stage.to_owned(), start.elapsed().as_secs_f64());
        out
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn plans(solutions: &[WotSolution]) -> Vec<TransportPlan> {
    solutions.iter().map(|s| s.plan.clone()).collect()
}

struct Inputs {
    train: SnapshotDataset,
    held_out: Option<(SnapshotDataset, TrajectorySet)>,
}

/// Runs every stage. `cfg` must come from [`PipelineConfig::resolve`] or a loader.
pub fn run(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let cfg = cfg.clone().resolve()?;
    let out_dir = cfg.output_dir.clone();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&cfg, &dir.join("resolved_config.json"))?;
    }
    let mut clock = Stopwatch {
        timings: BTreeMap::new(),
    };

    let grn = clock.run("load_network", || {
        GrnDefinition::load_or_builtin(&cfg.network)
    })?;
    let truth_adj = grn.adjacency_matrix();

    let inputs = clock.run("simulate", || -> Result<Inputs> {
        let inputs = match (&cfg.dataset, &cfg.simulate) {
            (Some(path), _) => {
                let train = load_dataset(path)?;
                if train.gene_names() != grn.gene_names() {
                    return Err(invalid!(
                        "dataset genes {:?} differ from network genes {:?}",
                        train.gene_names(),
                        grn.gene_names()
                    ));
                }
                Inputs {
                    train,
                    held_out: None,
                }
            }
            (None, Some(sim)) => {
                let traj = simulate_trajectories(&grn, sim)?;
                let data = assemble_dataset(&traj, sim)?;
                let truth = data.aligned_truth(SplitTag::Test)?;
                if let Some(dir) = &out_dir {
                    let data_dir = dir.join("data");
                    save_dataset_as(&data.train, &data_dir, "train_manifest.json", "train")?;
                    save_dataset_as(&data.test, &data_dir, "test_manifest.json", "test")?;
                    save_trajectories_csv(&truth, &data_dir.join("test_truth_trajectories.csv"))?;
                }
                Inputs {
                    train: data.train,
                    held_out: Some((data.test, truth)),
                }
            }
            (None, None) => unreachable!("resolve fills the simulation block"),
        };
        if let Some(dir) = &out_dir {
            save_matrix_csv(
                &truth_adj,
                grn.gene_names(),
                &dir.join("truth_adjacency.csv"),
            )?;
        }
        Ok(inputs)
    })?;

    let train_solutions = clock.run("transport", || {
        transport_chain(&inputs.train, &cfg.transport)
    })?;
    let transport_diag: Vec<PairDiagnostics> = train_solutions
        .iter()
        .map(PairDiagnostics::from_solution)
        .collect();

    let trajectories = clock.run("stitch", || {
        let traj = stitch_trajectories(&inputs.train, &plans(&train_solutions))?;
        if let Some(dir) = &out_dir {
            save_trajectories_csv(&traj, &dir.join("trajectories.csv"))?;
        }
        Ok(traj)
    })?;

    let reconstruction = clock.run("eval_traj", || {
        let Some((test, truth)) = &inputs.held_out else {
            return Ok(None);
        };
        let wot = plans(&transport_chain(test, &cfg.transport)?);
        let ot = if cfg.compare_plain_ot {
            Some(plans(&transport_chain(test, &cfg.transport.plain_ot())?))
        } else {
            None
        };
        let seed = derive_seed(cfg.master_seed, &[tags::RECON_RANDOM]);
        compare_reconstructions(test, truth, &wot, ot.as_deref(), seed).map(Some)
    })?;

    let runs = clock.run("infer", || {
        (0..cfg.n_seeds)
            .into_par_iter()
            .map(|index| {
                let seed = cfg.run_seed(index);
                let nri_cfg = NriConfig {
                    seed,
                    ..cfg.nri.clone()
                };
                let trained =
                    nri::train(&trajectories, &nri_cfg).map_err(|e| annotate_seed(e, index))?;
                if let Some(dir) = &out_dir {
                    let seed_dir = dir.join(format!("seed_{index:02}"));
                    std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
                    save_edges_csv(
                        &trained.probabilities,
                        grn.gene_names(),
                        &seed_dir.join("edges.csv"),
                    )?;
                    write_json(&trained.log, &seed_dir.join("training_log.json"))?;
                }
                Ok((index, seed, trained))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let (per_seed, predictions, null, ppcor) = clock.run("evaluate", || {
        let mut per_seed = Vec::with_capacity(runs.len());
        let mut predictions = Vec::with_capacity(runs.len());
        for (index, seed, trained) in &runs {
            let report = metrics::evaluate(&trained.probabilities, truth_adj.view())?;
            if let Some(dir) = &out_dir {
                write_json(
                    &report,
                    &dir.join(format!("seed_{index:02}")).join("metrics.json"),
                )?;
            }
            per_seed.push(SeedRun {
                index: *index,
                seed: *seed,
                metrics: report,
                final_epoch: trained.log.last().cloned(),
            });
            predictions.push(trained.probabilities.clone());
        }
        let null = metrics::shuffled_truth_null(
            &predictions,
            truth_adj.view(),
            cfg.null_repetitions,
            cfg.master_seed,
        )?;
        let baseline = metrics::ppcor_baseline(&inputs.train)?;
        let ppcor = metrics::evaluate(&baseline.scores, truth_adj.view())?;
        if let Some(dir) = &out_dir {
            save_edges_csv(
                &baseline.scores,
                grn.gene_names(),
                &dir.join("ppcor_edges.csv"),
            )?;
        }
        Ok((per_seed, predictions, null, ppcor))
    })?;

    let reports: Vec<MetricsReport> = per_seed.iter().map(|r| r.metrics).collect();
    let metrics = MetricsSummary {
        master_seed: cfg.master_seed,
        network: grn_label(&cfg.network),
        aggregate: Aggregate::from_reports(&reports)?,
        per_seed,
        null,
        ppcor,
        reconstruction,
        transport: transport_diag,
    };
    let summary = Summary {
        config: cfg,
        metrics,
        timings: clock.timings,
    };
    if let Some(dir) = &out_dir {
        write_json(&summary.metrics, &dir.join("metrics_summary.json"))?;
        write_json(&summary, &dir.join("summary.json"))?;
    }
    Ok(PipelineOutput {
        summary,
        trajectories,
        predictions,
    })
}

fn annotate_seed(err: Error, index: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("seed run {index}: {msg}")),
        other => other,
    }
}

fn grn_label(network: &str) -> String {
    Path::new(network)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| network.to_owned())
}

/// Truth adjacency as `u8`, exposed for callers that score predictions themselves.
pub fn truth_adjacency(network: &str) -> Result<Array2<u8>> {
    Ok(GrnDefinition::load_or_builtin(network)?.adjacency_matrix())
}

#[cfg(test)]
mod tests;
