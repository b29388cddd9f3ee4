//! `otgrn`: snapshot simulation, transport, stitching, network inference and scoring.
//!
//! Configuration precedence for every subcommand: command-line flags override
//! values from a `--config` file, which override built-in defaults.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
//! 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use otgrn_core::datamodel::{
    load_dataset, load_edges_csv, load_labeled_matrix_csv, load_matrix_csv, load_trajectories_csv,
    save_dataset_as, save_edges_csv, save_labeled_matrix_csv, save_matrix_csv,
    save_trajectories_csv,
};
use otgrn_core::nri::{self, EncoderKind, NriConfig};
use otgrn_core::pipeline::{self, PipelineConfig};
use otgrn_core::simulate::{assemble_dataset, simulate_trajectories, SimulationConfig};
use otgrn_core::trajectory::{
    paths_to_trajectories, reconstruction_error, stitch_paths, StitchMode,
};
use otgrn_core::transport::{transport_chain, EpsilonSpec, MarginalPenalty, TransportConfig};
use otgrn_core::{metrics, ErrorKind, GrnDefinition, SplitTag, TrajectoryOrigin};

#[derive(Parser)]
#[command(
    name = "otgrn",
    version,
    about = "Trajectory reconstruction with optimal transport and GRN inference"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a network and write shuffled train/test snapshot datasets.
    Simulate(SimulateArgs),
    /// Couple consecutive snapshots with growth-reweighted entropic transport.
    Transport(TransportArgs),
    /// Chain transport plans into per-cell trajectories.
    Stitch(StitchArgs),
    /// Score reconstructed trajectories against true ones.
    EvalTraj(EvalTrajArgs),
    /// Train the edge model on trajectories and write edge probabilities.
    Infer(InferArgs),
    /// Score edge probabilities against a truth adjacency matrix.
    Evaluate(EvaluateArgs),
    /// Run every stage from one JSON configuration.
    Pipeline(PipelineArgs),
    /// Finite-difference check of every differentiable primitive and the model loss.
    #[command(hide = true)]
    Gradcheck(GradcheckArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Built-in network (mcad-like, vsc-like) or a network JSON file.
    #[arg(long, default_value = "mcad-like")]
    network: String,
    /// Simulation settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_cells: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct TransportArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Transport settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `auto`, an absolute value, or `<s>xmean` relative to the mean cost.
    #[arg(long)]
    epsilon: Option<EpsilonSpec>,
    /// Marginal penalty; `inf` gives balanced transport.
    #[arg(long)]
    lambda: Option<MarginalPenalty>,
    #[arg(long)]
    growth_iters: Option<usize>,
    /// Balanced transport without growth reweighting.
    #[arg(long)]
    plain: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct StitchArgs {
    /// `plans.json` written by `transport`.
    #[arg(long)]
    plans: PathBuf,
    /// Dataset manifest; defaults to the one recorded with the plans.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Draw successors from plan rows instead of taking the argmax.
    #[arg(long)]
    sample: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvalTrajArgs {
    #[arg(long)]
    reconstructed: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct InferArgs {
    /// Trajectory CSV.
    #[arg(long)]
    trajectories: PathBuf,
    /// Model settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    /// Edge list output.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss log (JSON).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    edges: PathBuf,
    /// Square truth adjacency CSV with gene headers.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanEntry {
    file: String,
    source_time: f64,
    target_time: f64,
    epsilon: f64,
    iterations: usize,
    converged: bool,
    marginal_error: f64,
    growth_rounds: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanManifest {
    dataset: PathBuf,
    config: TransportConfig,
    plans: Vec<PlanEntry>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| otgrn_core::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| otgrn_core::Error::Invalid(format!("{}: {e}", path.display())).into())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| otgrn_core::Error::Io {
            path: p.to_owned(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| otgrn_core::Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimulationConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = args.n_cells {
        cfg.n_cells = n;
    }
    cfg.validate()?;
    let grn = GrnDefinition::load_or_builtin(&args.network)?;
    let traj = simulate_trajectories(&grn, &cfg)?;
    let data = assemble_dataset(&traj, &cfg)?;
    create_dir(&args.out)?;
    save_dataset_as(&data.train, &args.out, "train_manifest.json", "train")?;
    save_dataset_as(&data.test, &args.out, "test_manifest.json", "test")?;
    save_trajectories_csv(
        &data.aligned_truth(SplitTag::Train)?,
        &args.out.join("train_truth.csv"),
    )?;
    save_trajectories_csv(
        &data.aligned_truth(SplitTag::Test)?,
        &args.out.join("test_truth.csv"),
    )?;
    save_matrix_csv(
        &grn.adjacency_matrix(),
        grn.gene_names(),
        &args.out.join("truth_adjacency.csv"),
    )?;
    grn.save(&args.out.join("network.json"))?;
    write_json(&cfg, Some(&args.out.join("simulation_config.json")))?;
    log::info!("wrote datasets to {}", args.out.display());
    Ok(())
}

fn transport(args: TransportArgs) -> Result<()> {
    let mut cfg: TransportConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TransportConfig::default(),
    };
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(l) = args.lambda {
        cfg.marginal_penalty = l;
    }
    if let Some(n) = args.growth_iters {
        cfg.growth_iters = n;
    }
    if args.plain {
        cfg = cfg.plain_ot();
    }
    let ds = load_dataset(&args.dataset)?;
    let solutions = transport_chain(&ds, &cfg)?;
    create_dir(&args.out)?;
    let mut plans = Vec::with_capacity(solutions.len());
    for (i, s) in solutions.iter().enumerate() {
        let file = format!("plan_{i:03}.csv");
        save_labeled_matrix_csv(
            &s.plan.gamma,
            ds.snapshot(i).cell_ids(),
            ds.snapshot(i + 1).cell_ids(),
            &args.out.join(&file),
        )?;
        plans.push(PlanEntry {
            file,
            source_time: s.plan.source_time,
            target_time: s.plan.target_time,
            epsilon: s.plan.epsilon,
            iterations: s.plan.iterations,
            converged: s.plan.converged,
            marginal_error: s.plan.marginal_error,
            growth_rounds: s.growth_rounds,
        });
    }
    let dataset = std::fs::canonicalize(&args.dataset).unwrap_or(args.dataset);
    write_json(
        &PlanManifest {
            dataset,
            config: cfg,
            plans,
        },
        Some(&args.out.join("plans.json")),
    )
}

fn stitch(args: StitchArgs) -> Result<()> {
    let manifest: PlanManifest = read_json(&args.plans)?;
    let ds = load_dataset(args.dataset.as_deref().unwrap_or(&manifest.dataset))?;
    let base = args.plans.parent().unwrap_or(Path::new("."));
    let mut gammas = Vec::with_capacity(manifest.plans.len());
    for (i, entry) in manifest.plans.iter().enumerate() {
        let (rows, cols, gamma) = load_labeled_matrix_csv(&base.join(&entry.file))?;
        if i + 1 >= ds.n_times()
            || rows != ds.snapshot(i).cell_ids()
            || cols != ds.snapshot(i + 1).cell_ids()
        {
            return Err(otgrn_core::Error::Invalid(format!(
                "{} does not match the cells of snapshots {i} and {}",
                entry.file,
                i + 1
            ))
            .into());
        }
        gammas.push(gamma);
    }
    let views: Vec<_> = gammas.iter().map(|g| g.view()).collect();
    let mode = if args.sample {
        StitchMode::Sample { seed: args.seed }
    } else {
        StitchMode::Argmax
    };
    let traj = paths_to_trajectories(&ds, &stitch_paths(&ds, &views, mode)?)?;
    save_trajectories_csv(&traj, &args.out)?;
    Ok(())
}

fn eval_traj(args: EvalTrajArgs) -> Result<()> {
    let rec = load_trajectories_csv(&args.reconstructed, TrajectoryOrigin::Reconstructed)?;
    let truth = load_trajectories_csv(&args.truth, TrajectoryOrigin::GroundTruth)?;
    let summary = reconstruction_error(&rec, &truth)?;
    #[derive(Serialize)]
    struct Report<'a> {
        overall_mean: f64,
        #[serde(flatten)]
        summary: &'a otgrn_core::trajectory::ErrorSummary,
    }
    write_json(
        &Report {
            overall_mean: summary.overall_mean(),
            summary: &summary,
        },
        args.out.as_deref(),
    )
}

fn infer(args: InferArgs) -> Result<()> {
    let mut cfg: NriConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => NriConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = args.hidden_dim {
        cfg.hidden_dim = h;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(k) = args.encoder {
        cfg.encoder_kind = k;
    }
    let traj = load_trajectories_csv(&args.trajectories, TrajectoryOrigin::Reconstructed)?;
    let out = nri::train(&traj, &cfg)?;
    save_edges_csv(&out.probabilities, traj.gene_names(), &args.out)?;
    if let Some(p) = &args.log {
        write_json(&out.log, Some(p))?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (genes, truth) = load_matrix_csv(&args.truth)?;
    let edges = load_edges_csv(&args.edges, &genes)?;
    let truth = truth.mapv(|v| u8::from(v != 0.0));
    let report = metrics::evaluate(&edges, truth.view())?;
    write_json(&report, args.out.as_deref())
}

fn run_pipeline(args: PipelineArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = args.n_seeds {
        cfg.n_seeds = n;
    }
    if let Some(n) = args.network {
        cfg.network = n;
    }
    if let Some(d) = args.output_dir {
        cfg.output_dir = Some(d);
    }
    let cfg = cfg.resolve()?;
    if args.dry_run {
        return write_json(&cfg, None);
    }
    let out = pipeline::run(&cfg)?;
    let agg = out.summary.metrics.aggregate;
    println!(
        "auroc {:.4} ± {:.4}  auprc {:.4} ± {:.4}  epr {:.4} ± {:.4}  ({} seeds)",
        agg.auroc_mean,
        agg.auroc_std,
        agg.auprc_mean,
        agg.auprc_std,
        agg.epr_mean,
        agg.epr_std,
        agg.n_seeds
    );
    if cfg.output_dir.is_none() {
        write_json(&out.summary, None)?;
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let mut reports = otgrn_core::autodiff::gradcheck::primitive_suite(args.seed)?;
    reports.extend(nri::loss_gradcheck(args.seed)?);
    let mut failed = 0;
    for r in &reports {
        let ok = r.passed(args.tol);
        failed += usize::from(!ok);
        println!(
            "{} {:<28} max_rel_error {:.3e} ({} entries)",
            if ok { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.n_checked
        );
    }
    if failed > 0 {
        return Err(otgrn_core::Error::Numeric(format!("{failed} gradient checks failed")).into());
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("OTGRN_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            otgrn_core::Error::Invalid(format!("OTGRN_THREADS={v:?} is not a positive integer"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<otgrn_core::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numeric) => 3,
        Some(ErrorKind::Io) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = init_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Transport(a) => transport(a),
        Command::Stitch(a) => stitch(a),
        Command::EvalTraj(a) => eval_traj(a),
        Command::Infer(a) => infer(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Gradcheck(a) => gradcheck(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
