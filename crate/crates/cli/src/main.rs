//! Command-line front end: persistence diagrams, distance matrices,
//! rewiring, feature propagation, training, experiment sweeps and the
//! stability checks.
//!
//! Every JSON report is a pure function of the inputs, the configuration and
//! the seeds, so re-running a command reproduces its output byte for byte.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use topo_rewire::filtration::node_diagrams;
use topo_rewire::harness::cache::DistanceCache;
use topo_rewire::harness::synthetic::PlantedPartition;
use topo_rewire::harness::{
    attack_sweep, derive_seeds, distances, prepare, run_ablation, sweep_eps, train_prepared,
    write_heatmap_csv, DatasetSource, ExperimentReport, PipelineConfig, Variant,
};
use topo_rewire::io::{load_dataset, save_dataset, write_edges, write_features};
use topo_rewire::stability::{conjecture_probe, run_stability_trials, StabilityTrials};
use topo_rewire::stan::StanOperator;
use topo_rewire::timr::{build_timr_with, grid, resolve_thresholds};
use topo_rewire::trinet::Checkpoint;
use topo_rewire::{Graph, Metric};

#[derive(Parser)]
#[command(name = "topo-rewire", version, about = "Topological relational inference on attributed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 0-dimensional persistence diagram of every node's k-hop neighborhood.
    Ph(PhArgs),
    /// Pairwise Wasserstein distances between neighborhood diagrams.
    Distances(DistancesArgs),
    /// Rewire the graph with distance thresholds.
    Rewire(RewireArgs),
    /// Propagate features with topological attention weights.
    Stan(StanArgs),
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Accuracy under random fake-edge injection.
    AttackSweep(AttackArgs),
    /// Accuracy over a grid of rewiring thresholds.
    EpsSweep(EpsArgs),
    /// Compare the full pipeline with its ablated arms.
    Ablate(AblateArgs),
    /// Check the average-degree stability bound on random graph pairs.
    VerifyStability(StabilityArgs),
    /// Measure the spectral conjecture for one edge addition.
    ProbeConjecture(ProbeArgs),
    /// Write a planted-partition dataset directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory with edges.csv, features.csv and optional
    /// labels.csv, train.csv, val.csv, test.csv.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Symmetrize a directed edge list.
    #[arg(long)]
    directed: bool,
    /// Use the default planted-partition graph instead of a directory.
    #[arg(long, conflicts_with = "data")]
    synthetic: bool,
    /// Seed of the planted-partition graph.
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(Graph, DatasetSource)> {
        if let Some(dir) = &self.data {
            let g = load_dataset(dir, self.directed)
                .with_context(|| format!("loading dataset from {}", dir.display()))?;
            let source = DatasetSource::Directory {
                path: dir.display().to_string(),
                directed: self.directed,
            };
            return Ok((g, source));
        }
        let spec = PlantedPartition { seed: self.synthetic_seed, ..Default::default() };
        Ok((spec.generate()?, DatasetSource::Synthetic(spec)))
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, applied last (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// degree, degree-local or attribute.
    #[arg(long)]
    filtration: Option<String>,
    /// euclidean or hamming.
    #[arg(long)]
    metric: Option<String>,
    /// Neighborhood hop radius.
    #[arg(long)]
    k: Option<usize>,
    /// Wasserstein order.
    #[arg(long)]
    p: Option<f64>,
    /// Lower threshold: a distance, `qX` for a quantile, or `inf`.
    #[arg(long)]
    eps1: Option<String>,
    /// Upper threshold: a distance, `qX` for a quantile, or `inf`.
    #[arg(long)]
    eps2: Option<String>,
    /// Only add edges between nodes at most this many hops apart.
    #[arg(long)]
    candidate_hops: Option<usize>,
    /// Recompute distances instead of using the on-disk cache.
    #[arg(long)]
    no_cache: bool,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_kv(&text)?;
        }
        let flags = [
            ("filtration", self.filtration.clone()),
            ("metric", self.metric.clone()),
            ("k", self.k.map(|v| v.to_string())),
            ("p", self.p.map(|v| v.to_string())),
            ("eps1", self.eps1.clone()),
            ("eps2", self.eps2.clone()),
            ("candidate_hops", self.candidate_hops.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.set(key, &value)?;
            }
        }
        for kv in &self.set {
            let Some((key, value)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn cache(&self) -> Option<DistanceCache> {
        (!self.no_cache).then(DistanceCache::from_env)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Only report these nodes (comma separated).
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    /// Dense matrix, one row per node.
    Csv,
    /// Nonzero `[u, v, d]` triples with `u < v`.
    Json,
}

#[derive(Args)]
struct DistancesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: MatrixFormat,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RewireArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Edge list of the rewired graph.
    #[arg(long)]
    edges_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct StanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Number of propagation steps.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// sum or mean.
    #[arg(long)]
    aggregate: Option<String>,
    /// identity or mlp.
    #[arg(long)]
    update: Option<String>,
    /// Hop radius of the attention neighborhood (defaults to --k).
    #[arg(long)]
    stan_k: Option<usize>,
    /// Feature CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// full, no_timr, no_stan or stn_only.
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// JSON parameter checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SeedArgs {
    /// Runs per cell.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Base seed; run seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Fake edges per existing edge.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    ratios: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "full,no_timr")]
    variants: Vec<Variant>,
    /// Accuracy curves as `variant,ratio,mean,std` rows.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct EpsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    seeds: SeedArgs,
    /// eps1 values: `start:stop:step` or a comma list.
    #[arg(long)]
    grid1: String,
    /// eps2 values: `start:stop:step` or a comma list.
    #[arg(long)]
    grid2: String,
    /// Heat map of mean test accuracy.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long, value_delimiter = ',', default_value = "full,no_timr,no_stan,stn_only")]
    variants: Vec<Variant>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps1: f64,
    #[arg(long, default_value_t = 2.0)]
    eps2: f64,
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Absent edge to add, as `u,v`.
    #[arg(long)]
    edge: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    eps1: f64,
    #[arg(long)]
    eps2: f64,
    /// euclidean or hamming.
    #[arg(long, default_value = "euclidean")]
    metric: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 0.08)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_metric(text: &str) -> Result<Metric> {
    serde_json::from_value(json!(text)).with_context(|| format!("unknown metric `{text}`"))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad grid `{text}`"))?;
        if !(nums[2] > 0.0) || nums[1] < nums[0] {
            bail!("grid `{text}` needs start <= stop and a positive step");
        }
        return Ok(grid(nums[0], nums[1], nums[2]));
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad grid value `{p}`")))
        .collect()
}

fn write_curves(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "variant,ratio,mean_test_acc,std_test_acc")?;
    for c in &report.cells {
        let std = c.std_test_acc.map_or(String::new(), |s| s.to_string());
        writeln!(f, "{},{},{},{}", c.variant, c.attack_ratio.unwrap_or(0.0), c.mean_test_acc, std)?;
    }
    Ok(())
}

fn ph(args: PhArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let diagrams = node_diagrams(&g, cfg.filtration, cfg.k)?;
    let nodes: Vec<usize> = if args.nodes.is_empty() { (0..g.n_nodes()).collect() } else { args.nodes };
    let mut entries = Vec::with_capacity(nodes.len());
    for u in nodes {
        let Some(d) = diagrams.get(u) else {
            bail!("node {u} out of range ({} nodes)", g.n_nodes());
        };
        entries.push(json!({ "node": u, "pairs": d.pairs, "essential": d.essential }));
    }
    let report = json!({ "filtration": cfg.filtration, "k": cfg.k, "diagrams": entries });
    emit(&to_json(&report)?, args.out.out.as_deref())
}

fn distances_cmd(args: DistancesArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let dm = distances(&g, &cfg, args.pipeline.cache().as_ref())?;
    match args.format {
        MatrixFormat::Csv => dm.write_csv(sink(args.out.as_deref())?)?,
        MatrixFormat::Json => emit(&to_json(&dm.to_sparse_json())?, args.out.as_deref())?,
    }
    Ok(())
}

fn rewire(args: RewireArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let dm = distances(&g, &cfg, args.pipeline.cache().as_ref())?;
    let (eps1, eps2) = resolve_thresholds(&dm, cfg.eps1, cfg.eps2)?;
    let t = build_timr_with(&g, &dm, eps1, eps2, cfg.candidate_hops)?;
    if let Some(path) = &args.edges_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_edges(&t.w_joint.edges(), f)?;
    }
    let report = json!({
        "filtration": cfg.filtration,
        "k": cfg.k,
        "eps1": eps1,
        "eps2": eps2,
        "candidate_hops": cfg.candidate_hops,
        "stats": t.stats(),
    });
    emit(&to_json(&report)?, args.out.out.as_deref())
}

fn stan_cmd(args: StanArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let mut cfg = args.pipeline.config()?;
    let flags = [
        ("stan.iterations", args.iters.map(|v| v.to_string())),
        ("stan.alpha", args.alpha.map(|v| v.to_string())),
        ("stan.aggregate", args.aggregate.clone()),
        ("stan.update", args.update.clone()),
        ("stan_k", args.stan_k.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            cfg.set(key, &value)?;
        }
    }
    cfg.validate()?;
    let dm = distances(&g, &cfg, args.pipeline.cache().as_ref())?;
    let x = StanOperator::new(&g, &dm, cfg.stan_config())?.run(g.features())?;
    write_features(&x, sink(args.out.as_deref())?)?;
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let dm = distances(&g, &cfg, args.pipeline.cache().as_ref())?;
    let prepared = prepare(&g, &dm, &cfg, args.variant)?;
    let (model, run) = train_prepared(&g, &prepared, &cfg.model, cfg.model.seed)?;
    if let Some(path) = &args.checkpoint {
        let ckpt = Checkpoint::new(&model, &cfg.model);
        fs::write(path, to_json(&ckpt)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = json!({
        "variant": args.variant,
        "train_acc": run.train_acc,
        "val_acc": run.val_acc,
        "test_acc": run.test_acc,
        "epochs": cfg.model.epochs,
        "best_epoch": run.best_epoch,
        "seed": run.seed,
        "eps1": run.eps1,
        "eps2": run.eps2,
        "rewire": run.rewire,
        "config": cfg,
    });
    emit(&to_json(&report)?, args.out.out.as_deref())
}

fn attack_cmd(args: AttackArgs) -> Result<()> {
    let (g, source) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let seeds = derive_seeds(args.seeds.seed, args.seeds.runs);
    let cache = args.pipeline.cache();
    let report = attack_sweep(&g, source, &cfg, &args.ratios, &args.variants, &seeds, cache.as_ref())?;
    if let Some(path) = &args.csv {
        write_curves(&report, path)?;
    }
    emit(&report.to_json()?, args.out.out.as_deref())
}

fn eps_cmd(args: EpsArgs) -> Result<()> {
    let (g, source) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let seeds = derive_seeds(args.seeds.seed, args.seeds.runs);
    let (g1, g2) = (parse_grid(&args.grid1)?, parse_grid(&args.grid2)?);
    let cache = args.pipeline.cache();
    let report = sweep_eps(&g, source, &cfg, &g1, &g2, &seeds, cache.as_ref())?;
    if let Some(path) = &args.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_heatmap_csv(&report, f)?;
    }
    emit(&report.to_json()?, args.out.out.as_deref())
}

fn ablate_cmd(args: AblateArgs) -> Result<()> {
    let (g, source) = args.data.load()?;
    let cfg = args.pipeline.config()?;
    let seeds = derive_seeds(args.seeds.seed, args.seeds.runs);
    let cache = args.pipeline.cache();
    let report = run_ablation(&g, source, &cfg, &args.variants, &seeds, cache.as_ref())?;
    emit(&report.to_json()?, args.out.out.as_deref())
}

fn stability_cmd(args: StabilityArgs) -> Result<()> {
    let cfg = StabilityTrials {
        trials: args.trials,
        nodes: args.nodes,
        k: args.k,
        eps1: args.eps1,
        eps2: args.eps2,
        edge_prob: args.edge_prob,
        seed: args.seed,
    };
    let trials = run_stability_trials(&cfg)?;
    let violations: Vec<usize> = trials.iter().filter(|t| !t.report.holds).map(|t| t.trial).collect();
    let zero_distance = trials.iter().filter(|t| t.report.local_k_distance == 0.0).count();
    let degenerate = trials.iter().filter(|t| t.report.degenerate).count();
    let rows: Vec<_> = trials
        .iter()
        .map(|t| {
            let r = &t.report;
            json!({
                "trial": t.trial,
                "seed": t.seed,
                "edges": t.edges,
                "alpha_plus": r.alpha_plus,
                "alpha_minus": r.alpha_minus,
                "lhs": r.lhs,
                "rhs": r.rhs,
                "K": r.k_constant,
                "r0": r.r0,
                "D_k": r.local_k_distance,
                "holds": r.holds,
            })
        })
        .collect();
    let report = json!({
        "config": cfg,
        "holds_all": violations.is_empty(),
        "violations": violations,
        "zero_distance_trials": zero_distance,
        "degenerate_trials": degenerate,
        "trials": rows,
    });
    emit(&to_json(&report)?, args.out.out.as_deref())
}

fn probe_cmd(args: ProbeArgs) -> Result<()> {
    let (g, _) = args.data.load()?;
    let metric = parse_metric(&args.metric)?;
    let edge = args
        .edge
        .split_once(',')
        .and_then(|(u, v)| Some((u.trim().parse().ok()?, v.trim().parse().ok()?)))
        .with_context(|| format!("--edge expects `u,v`, got `{}`", args.edge))?;
    let report = conjecture_probe(&g, edge, args.k, args.eps1, args.eps2, metric)?;
    emit(&to_json(&report)?, args.out.out.as_deref())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let spec = PlantedPartition {
        n_nodes: args.nodes,
        n_blocks: args.blocks,
        p_in: args.p_in,
        p_out: args.p_out,
        seed: args.seed,
        ..Default::default()
    };
    let g = spec.generate()?;
    save_dataset(&g, &args.out)?;
    fs::write(args.out.join("synthetic.json"), to_json(&spec)?)?;
    let summary = json!({ "nodes": g.n_nodes(), "edges": g.n_edges(), "spec": spec });
    emit(&to_json(&summary)?, None)
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || e.downcast_ref::<topo_rewire::Error>()
                .is_some_and(|t| t.is_io_kind(io::ErrorKind::BrokenPipe))
    })
}

fn main() -> Result<()> {
    match run(Cli::parse()) {
        Err(e) if is_broken_pipe(&e) => Ok(()),
        other => other,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ph(a) => ph(a),
        Command::Distances(a) => distances_cmd(a),
        Command::Rewire(a) => rewire(a),
        Command::Stan(a) => stan_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::AttackSweep(a) => attack_cmd(a),
        Command::EpsSweep(a) => eps_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::VerifyStability(a) => stability_cmd(a),
        Command::ProbeConjecture(a) => probe_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}
