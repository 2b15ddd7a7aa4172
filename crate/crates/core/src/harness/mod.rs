//! End-to-end pipelines and experiments: ablations, threshold sweeps and
//! random-attack robustness sweeps, with JSON reports.
//!
//! Every run is determined by the pipeline configuration, the dataset and a
//! seed. Runs over seeds execute in parallel and are collected in seed order,
//! so reports are reproducible byte for byte.

pub mod attack;
pub mod cache;
pub mod stats;
pub mod synthetic;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{DegreeScope, Filtration};
use crate::graph::{Graph, Metric};
use crate::stan::{Aggregate, SideTerm, StanConfig, StanOperator, Update};
use crate::timr::{build_timr_with, resolve_thresholds, RewireStats, Threshold};
use crate::trinet::{laplacian_of, train, Activation, Model, ModelConfig, TopoLaplacian, TrainingData};
use crate::timr::BinaryAdjacency;
use crate::wasserstein::{TopoDistanceMatrix, WassersteinConfig};

use attack::{random_attack, AttackConfig};
use cache::{cached_distances, DistanceCache};
use synthetic::PlantedPartition;

/// Everything needed to turn a labeled graph into trained accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filtration: Filtration,
    /// Hop radius of the neighborhoods whose diagrams are compared.
    pub k: usize,
    pub wasserstein: WassersteinConfig,
    pub eps1: Threshold,
    pub eps2: Threshold,
    pub candidate_hops: Option<usize>,
    /// Hop radius of the STAN neighbor sets; defaults to `k`. Overrides
    /// `stan.k`.
    pub stan_k: Option<usize>,
    pub stan: StanConfig,
    pub model: ModelConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filtration: Filtration::attribute(Metric::Euclidean),
            k: 1,
            wasserstein: WassersteinConfig::default(),
            eps1: Threshold::Quantile(0.02),
            eps2: Threshold::Quantile(0.98),
            candidate_hops: None,
            stan_k: None,
            stan: StanConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

fn parse_enum<T: serde::de::DeserializeOwned>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

impl PipelineConfig {
    /// Sets one field from a flat `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let metric = match self.filtration {
            Filtration::Attribute { metric } => metric,
            Filtration::Degree { .. } => Metric::Euclidean,
        };
        match key {
            "filtration" => {
                self.filtration = match value {
                    "degree" => Filtration::degree(),
                    "degree-local" => Filtration::Degree { scope: DegreeScope::Local },
                    "attribute" => Filtration::attribute(metric),
                    _ => return Err(Error::UnknownVariant(value.to_string())),
                }
            }
            "metric" => {
                let metric: Metric = parse_enum(key, value)?;
                if let Filtration::Attribute { .. } = self.filtration {
                    self.filtration = Filtration::attribute(metric);
                }
            }
            "k" => self.k = parse_value(key, value)?,
            "p" => self.wasserstein.p = parse_value(key, value)?,
            "essential_penalty" => {
                self.wasserstein.essential_penalty = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "eps1" => self.eps1 = value.parse()?,
            "eps2" => self.eps2 = value.parse()?,
            "candidate_hops" => {
                self.candidate_hops = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "stan.iterations" => self.stan.iterations = parse_value(key, value)?,
            "stan.alpha" => self.stan.alpha = parse_value(key, value)?,
            "stan.aggregate" => self.stan.aggregate = parse_enum::<Aggregate>(key, value)?,
            "stan.update" => self.stan.update = parse_enum::<Update>(key, value)?,
            "stan.side_term" => self.stan.side_term = parse_enum::<SideTerm>(key, value)?,
            "stan_k" | "stan.k" => {
                self.stan_k = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "stan.numeric_floor" => self.stan.numeric_floor = parse_value(key, value)?,
            "stan.mlp_seed" => self.stan.mlp_seed = parse_value(key, value)?,
            "mu" => self.model.mu = parse_value(key, value)?,
            "sigma" => self.model.sigma = parse_value(key, value)?,
            "rho" => self.model.rho = parse_value(key, value)?,
            "r" => self.model.r = parse_value(key, value)?,
            "hidden" => {
                self.model.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?
            }
            "activation" => self.model.activation = parse_enum::<Activation>(key, value)?,
            "dropout" => self.model.dropout = parse_value(key, value)?,
            "l2" => self.model.l2 = parse_value(key, value)?,
            "lr" => self.model.lr = parse_value(key, value)?,
            "epochs" => self.model.epochs = parse_value(key, value)?,
            "seed" => self.model.seed = parse_value(key, value)?,
            "parallel" => self.model.parallel = parse_value(key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file on top of `self`. Blank lines and
    /// `#` comments are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        self.stan_config().validate()?;
        self.model.validate()
    }

    /// STAN settings with the effective hop radius.
    pub fn stan_config(&self) -> StanConfig {
        StanConfig {
            k: self.stan_k.unwrap_or(self.k),
            ..self.stan
        }
    }
}

/// Pipeline arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Rewired graph and topology-weighted neighbor features.
    Full,
    /// Original adjacency, features as in `Full`.
    NoTimr,
    /// Rewired graph, raw features.
    NoStan,
    /// Rewired graph; the feature update sums the node's own features under
    /// the topological weights instead of its neighbors'.
    StnOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoTimr, Variant::NoStan, Variant::StnOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTimr => "no_timr",
            Variant::NoStan => "no_stan",
            Variant::StnOnly => "stn_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Where a report's graph came from, recorded so the run can be repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Directory { path: String, directed: bool },
    Synthetic(PlantedPartition),
    InMemory,
}

/// Graph operator and input features of one arm.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub laplacian: TopoLaplacian,
    pub features: DMatrix<f64>,
    /// Resolved thresholds, absent for arms that keep the original graph.
    pub eps: Option<(f64, f64)>,
    pub rewire: Option<RewireStats>,
}

/// Builds the operator and features of `variant` with explicit thresholds.
pub fn prepare_with(
    g: &Graph,
    dm: &TopoDistanceMatrix,
    cfg: &PipelineConfig,
    variant: Variant,
    eps: (f64, f64),
) -> Result<Prepared> {
    let (adj, eps, rewire) = match variant {
        Variant::NoTimr => (BinaryAdjacency::from_graph(g), None, None),
        _ => {
            let t = build_timr_with(g, dm, eps.0, eps.1, cfg.candidate_hops)?;
            let stats = t.stats();
            (t.w_joint, Some(eps), Some(stats))
        }
    };
    let features = match variant {
        Variant::NoStan => g.features().clone(),
        Variant::StnOnly => {
            let stan = StanConfig { side_term: SideTerm::SelfOnly, ..cfg.stan_config() };
            StanOperator::new(g, dm, stan)?.run(g.features())?
        }
        Variant::Full | Variant::NoTimr => {
            StanOperator::new(g, dm, cfg.stan_config())?.run(g.features())?
        }
    };
    Ok(Prepared {
        laplacian: laplacian_of(&adj, cfg.model.sigma, cfg.model.rho)?,
        features,
        eps,
        rewire,
    })
}

/// Builds the operator and features of `variant`, resolving the configured
/// thresholds against `dm`.
pub fn prepare(
    g: &Graph,
    dm: &TopoDistanceMatrix,
    cfg: &PipelineConfig,
    variant: Variant,
) -> Result<Prepared> {
    let eps = resolve_thresholds(dm, cfg.eps1, cfg.eps2)?;
    prepare_with(g, dm, cfg, variant, eps)
}

/// Pairwise distances of `g` under `cfg`.
pub fn distances(g: &Graph, cfg: &PipelineConfig, cache: Option<&DistanceCache>) -> Result<TopoDistanceMatrix> {
    cached_distances(g, cfg.filtration, cfg.k, &cfg.wasserstein, cache)
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub seed: u64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub best_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rewire: Option<RewireStats>,
}

fn labeled(g: &Graph) -> Result<&[usize]> {
    g.labels()
        .ok_or_else(|| Error::InvalidParameter("graph has no labels".into()))
}

/// Trains one model on a prepared arm.
pub fn train_prepared(
    g: &Graph,
    prepared: &Prepared,
    model: &ModelConfig,
    seed: u64,
) -> Result<(Model, Run)> {
    let labels = labeled(g)?;
    let masks = g.masks();
    let (train_nodes, val, test) = (masks.train_nodes(), masks.val_nodes(), masks.test_nodes());
    let data = TrainingData {
        features: &prepared.features,
        labels,
        n_classes: g.n_classes(),
        train: &train_nodes,
        val: &val,
        test: &test,
    };
    let cfg = ModelConfig { seed, ..model.clone() };
    let (m, report) = train(&prepared.laplacian, data, &cfg)?;
    Ok((
        m,
        Run {
            seed,
            train_acc: report.train_acc,
            val_acc: report.val_acc,
            test_acc: report.test_acc,
            best_epoch: report.best_epoch,
            eps1: prepared.eps.map(|e| e.0),
            eps2: prepared.eps.map(|e| e.1),
            rewire: prepared.rewire.clone(),
        },
    ))
}

/// Sub-seed `i` of `base` (splitmix64).
pub fn derive_seed(base: u64, i: u64) -> u64 {
    let mut z = base.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seeds(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| derive_seed(base, i)).collect()
}

/// Runs of one experimental condition with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attack_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps2: Option<f64>,
    pub mean_test_acc: f64,
    /// Sample standard deviation; absent for a single run.
    pub std_test_acc: Option<f64>,
    pub mean_val_acc: f64,
    pub runs: Vec<Run>,
}

impl Cell {
    fn new(variant: Variant, runs: Vec<Run>) -> Self {
        let test: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
        let val: Vec<f64> = runs.iter().map(|r| r.val_acc).collect();
        Cell {
            variant,
            attack_ratio: None,
            eps1: None,
            eps2: None,
            mean_test_acc: stats::mean(&test),
            std_test_acc: stats::sample_std(&test),
            mean_val_acc: stats::mean(&val),
            runs,
        }
    }

    pub fn test_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_acc).collect()
    }
}

/// One-sided comparison `mean(a) > mean(b)` of test accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub mean_diff: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_test: Option<stats::TTest>,
}

/// Accuracy lost by an arm between the clean graph and an attacked one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDrop {
    pub variant: Variant,
    pub ratio: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub dataset: DatasetSource,
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub comparisons: Vec<Comparison>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub drops: Vec<AccuracyDrop>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(experiment: &str, dataset: DatasetSource, config: &PipelineConfig, seeds: &[u64]) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            dataset,
            config: config.clone(),
            seeds: seeds.to_vec(),
            cells: Vec::new(),
            comparisons: Vec::new(),
            drops: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn cell(&self, variant: Variant) -> Option<&Cell> {
        self.cells.iter().find(|c| c.variant == variant)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn runs_for(g: &Graph, prepared: &Prepared, cfg: &PipelineConfig, seeds: &[u64]) -> Result<Vec<Run>> {
    seeds
        .par_iter()
        .map(|&s| train_prepared(g, prepared, &cfg.model, s).map(|(_, r)| r))
        .collect()
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    Ok(())
}

fn compare_against_full(cells: &[Cell]) -> Vec<Comparison> {
    let Some(full) = cells.iter().find(|c| c.variant == Variant::Full) else {
        return Vec::new();
    };
    let a = full.test_accuracies();
    cells
        .iter()
        .filter(|c| c.variant != Variant::Full)
        .map(|c| {
            let b = c.test_accuracies();
            Comparison {
                a: Variant::Full.to_string(),
                b: c.variant.to_string(),
                mean_diff: stats::mean(&a) - stats::mean(&b),
                t_test: stats::welch_one_sided(&a, &b),
            }
        })
        .collect()
}

/// Trains every variant on `g` under shared seeds and splits.
pub fn run_ablation(
    g: &Graph,
    dataset: DatasetSource,
    cfg: &PipelineConfig,
    variants: &[Variant],
    seeds: &[u64],
    cache: Option<&DistanceCache>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_seeds(seeds)?;
    labeled(g)?;
    let dm = distances(g, cfg, cache)?;
    let mut report = ExperimentReport::new("ablation", dataset, cfg, seeds);
    for &variant in variants {
        let prepared = prepare(g, &dm, cfg, variant)?;
        let mut cell = Cell::new(variant, runs_for(g, &prepared, cfg, seeds)?);
        (cell.eps1, cell.eps2) = (prepared.eps.map(|e| e.0), prepared.eps.map(|e| e.1));
        report.cells.push(cell);
    }
    report.comparisons = compare_against_full(&report.cells);
    Ok(report)
}

/// Full-pipeline accuracy for every `eps1 < eps2` pair of the grids.
pub fn sweep_eps(
    g: &Graph,
    dataset: DatasetSource,
    cfg: &PipelineConfig,
    grid1: &[f64],
    grid2: &[f64],
    seeds: &[u64],
    cache: Option<&DistanceCache>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_seeds(seeds)?;
    labeled(g)?;
    let dm = distances(g, cfg, cache)?;
    let mut report = ExperimentReport::new("eps-sweep", dataset, cfg, seeds);
    let mut pairs = Vec::new();
    for &e1 in grid1 {
        for &e2 in grid2 {
            if e1 < e2 && e1 >= 0.0 {
                pairs.push((e1, e2));
            } else {
                report.notes.push(format!("skipped invalid pair eps1={e1}, eps2={e2}"));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no valid (eps1 < eps2) pair in the grid".into()));
    }
    let cells: Vec<Cell> = pairs
        .par_iter()
        .map(|&eps| {
            let prepared = prepare_with(g, &dm, cfg, Variant::Full, eps)?;
            let runs = seeds
                .iter()
                .map(|&s| train_prepared(g, &prepared, &cfg.model, s).map(|(_, r)| r))
                .collect::<Result<Vec<_>>>()?;
            let mut cell = Cell::new(Variant::Full, runs);
            (cell.eps1, cell.eps2) = (Some(eps.0), Some(eps.1));
            Ok(cell)
        })
        .collect::<Result<_>>()?;
    report.cells = cells;
    Ok(report)
}

/// Writes a sweep as a matrix of mean test accuracies: one row per `eps1`,
/// one column per `eps2`, empty where the pair was invalid.
pub fn write_heatmap_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut e1s: Vec<f64> = report.cells.iter().filter_map(|c| c.eps1).collect();
    let mut e2s: Vec<f64> = report.cells.iter().filter_map(|c| c.eps2).collect();
    for v in [&mut e1s, &mut e2s] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["eps1\\eps2".to_string()];
    header.extend(e2s.iter().map(|e| e.to_string()));
    w.write_record(&header)?;
    for &e1 in &e1s {
        let mut row = vec![e1.to_string()];
        for &e2 in &e2s {
            let cell = report
                .cells
                .iter()
                .find(|c| c.eps1 == Some(e1) && c.eps2 == Some(e2));
            row.push(cell.map_or(String::new(), |c| format!("{:.6}", c.mean_test_acc)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy of each variant after injecting fake edges at each ratio. Run
/// `i` attacks with its own seed, shared by all variants; thresholds are
/// resolved against the attacked graph's distances.
pub fn attack_sweep(
    g: &Graph,
    dataset: DatasetSource,
    cfg: &PipelineConfig,
    ratios: &[f64],
    variants: &[Variant],
    seeds: &[u64],
    cache: Option<&DistanceCache>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_seeds(seeds)?;
    labeled(g)?;
    let mut report = ExperimentReport::new("attack-sweep", dataset, cfg, seeds);
    for &ratio in ratios {
        // one attacked graph (and distance matrix) per seed
        let per_seed: Vec<Vec<Run>> = seeds
            .par_iter()
            .map(|&s| {
                let attacked = random_attack(g, AttackConfig { ratio, seed: derive_seed(s, 1) })?;
                let dm = distances(&attacked, cfg, cache)?;
                variants
                    .iter()
                    .map(|&v| {
                        let prepared = prepare(&attacked, &dm, cfg, v)?;
                        train_prepared(&attacked, &prepared, &cfg.model, s).map(|(_, r)| r)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (i, &variant) in variants.iter().enumerate() {
            let runs = per_seed.iter().map(|r| r[i].clone()).collect();
            let mut cell = Cell::new(variant, runs);
            cell.attack_ratio = Some(ratio);
            report.cells.push(cell);
        }
    }
    for &variant in variants {
        let at = |r: f64| {
            report
                .cells
                .iter()
                .find(|c| c.variant == variant && c.attack_ratio == Some(r))
                .map(|c| c.mean_test_acc)
        };
        if let Some(base) = at(0.0) {
            for &ratio in ratios.iter().filter(|&&r| r != 0.0) {
                if let Some(acc) = at(ratio) {
                    report.drops.push(AccuracyDrop { variant, ratio, drop: base - acc });
                }
            }
        }
    }
    Ok(report)
}

/// Trains a single model with the configured seed.
pub fn run_single(
    g: &Graph,
    cfg: &PipelineConfig,
    variant: Variant,
    cache: Option<&DistanceCache>,
) -> Result<(Model, Run)> {
    cfg.validate()?;
    let dm = distances(g, cfg, cache)?;
    let prepared = prepare(g, &dm, cfg, variant)?;
    train_prepared(g, &prepared, &cfg.model, cfg.model.seed)
}
