//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p topo-rewire-cli --test acceptance -- 3 8`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use topo_rewire::filtration::{node_diagrams, Filtration};
use topo_rewire::graph::{degree_vector, k_hop_neighborhood, Graph, Metric};
use topo_rewire::harness::synthetic::PlantedPartition;
use topo_rewire::harness::{
    attack_sweep, derive_seeds, distances, prepare, prepare_with, run_ablation, train_prepared,
    DatasetSource, PipelineConfig, Variant,
};
use topo_rewire::stability::{check_degree_stability, random_pair};
use topo_rewire::stan::{StanConfig, StanOperator};
use topo_rewire::timr::{build_timr, identity_thresholds, resolve_thresholds, BinaryAdjacency, Threshold};
use topo_rewire::trinet::{topo_laplacian, Model, ModelConfig, Propagator};
use topo_rewire::wasserstein::{pairwise_distance_matrix, wasserstein_with};
use topo_rewire::{PersistenceDiagram, WassersteinConfig};

const PH_GRAPHS: usize = 200;
const PH_MAX_NODES: usize = 20;
const PH_TIME_LIMIT: Duration = Duration::from_secs(10);

const W_PAIRS: usize = 200;
const W_MAX_POINTS: usize = 5;
const W_TOL: f64 = 1e-9;
const METRIC_TRIPLES: usize = 500;
const METRIC_TOL: f64 = 1e-9;

const STAB_TRIALS: usize = 100;
const STAB_EDGE_PROB: f64 = 0.3;
const STAB_EPS: (f64, f64) = (0.5, 2.0);
const STAB_TIME_LIMIT: Duration = Duration::from_secs(120);

const SERIES_GRAPHS: usize = 20;
const SERIES_NODES: usize = 8;
const SERIES_MU: f64 = 0.1;
const SERIES_R: f64 = 50.0;
const SERIES_TOL: f64 = 1e-3;

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;

const STAN_INSTANCES: usize = 100;
const STAN_SUM_TOL: f64 = 1e-9;
/// Relative gap below which two distances count as a rounding tie.
const STAN_TIE_TOL: f64 = 1e-12;

const IDENTITY_GRAPHS: usize = 50;

const ABLATION_SEEDS: usize = 20;
const ABLATION_MIN_GAIN: f64 = 0.02;
const ABLATION_ALPHA: f64 = 0.05;
const ABLATION_TIME_LIMIT: Duration = Duration::from_secs(600);
const ATTACK_RATIO: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Degree or attribute neighborhood diagram of `u`, together with the
/// vertex values and weighted edges the oracle needs.
fn oracle_input(g: &Graph, u: usize, k: usize, filtration: Filtration) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let nb = k_hop_neighborhood(g, u, k, filtration.weighting()).unwrap();
    match filtration {
        Filtration::Degree { .. } => {
            let deg = degree_vector(g);
            let vals: Vec<f64> = nb.members().iter().map(|&v| deg[v] as f64).collect();
            let edges = nb.local_edges().iter().map(|&(a, b)| (a, b, vals[a].max(vals[b]))).collect();
            (vals, edges)
        }
        Filtration::Attribute { .. } => {
            let w = nb.weights().unwrap();
            let edges = nb.local_edges().iter().zip(w).map(|(&(a, b), &t)| (a, b, t)).collect();
            (vec![0.0; nb.len()], edges)
        }
    }
}

fn criterion_1() -> Outcome {
    let mut rng = rng(1001);
    let mut lib_time = Duration::ZERO;
    let mut checked = 0;
    for _ in 0..PH_GRAPHS {
        let n = rng.random_range(1..=PH_MAX_NODES);
        let p = rng.random_range(0.05..0.5);
        let g = random_graph(&mut rng, n, p, 3);
        let k = rng.random_range(1..=2);
        for filtration in [Filtration::degree(), Filtration::attribute(Metric::Euclidean)] {
            let start = Instant::now();
            let diagrams = node_diagrams(&g, filtration, k).unwrap();
            lib_time += start.elapsed();
            for (u, fast) in diagrams.iter().enumerate() {
                let (vals, edges) = oracle_input(&g, u, k, filtration);
                let slow = brute_force_diagram(&vals, &edges);
                if *fast != slow {
                    return outcome(false, format!("node {u} ({filtration:?}, k={k}): {fast:?} vs {slow:?}"));
                }
                checked += 1;
            }
        }
    }
    outcome(
        lib_time < PH_TIME_LIMIT,
        format!("{checked} neighborhood diagrams equal the oracle; union-find time {lib_time:.2?} (limit {PH_TIME_LIMIT:?})"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = rng(1002);
    let mut worst: f64 = 0.0;
    for i in 0..W_PAIRS {
        let (ea, eb) = (rng.random_range(0..3), rng.random_range(0..3));
        let a = random_diagram(&mut rng, W_MAX_POINTS, ea);
        let b = random_diagram(&mut rng, W_MAX_POINTS, eb);
        let p = if i % 4 == 3 { 2.0 } else { 1.0 };
        let cfg = WassersteinConfig::with_p(p);
        let fast = wasserstein_with(&a, &b, &cfg).unwrap();
        worst = worst.max((fast - brute_force_wasserstein(&a, &b, p, None)).abs());
    }
    if worst > W_TOL {
        return outcome(false, format!("max |solver - exhaustive| = {worst:e}"));
    }
    // Triangle inequality needs a penalty that does not depend on the pair:
    // either one essential class per diagram or a fixed penalty.
    let mut violations = Vec::new();
    for i in 0..METRIC_TRIPLES {
        let (varied, cfg) = if i % 2 == 0 {
            (false, WassersteinConfig::default())
        } else {
            (true, WassersteinConfig { p: 1.0, essential_penalty: Some(1.5) })
        };
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let e = if varied { rng.random_range(0..3) } else { 1 };
            random_diagram(rng, W_MAX_POINTS, e)
        };
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let d = |x: &PersistenceDiagram, y: &PersistenceDiagram| wasserstein_with(x, y, &cfg).unwrap();
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        if (ab - ba).abs() > METRIC_TOL || d(&a, &a) != 0.0 || ac > ab + bc + METRIC_TOL || (ab == 0.0) != (a == b) {
            violations.push(i);
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "max |solver - exhaustive| = {worst:e} over {W_PAIRS} pairs; metric axioms violated on {} of {METRIC_TRIPLES} triples",
            violations.len()
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut bound_fail = Vec::new();
    let mut zero_fail = Vec::new();
    let mut zero_cases = 0;
    let mut degenerate = 0;
    for trial in 0..STAB_TRIALS {
        let nodes = 6 + trial % 7;
        let k = 1 + trial % 2;
        let mut rng = rng(trial as u64);
        let (g1, g2) = random_pair(nodes, STAB_EDGE_PROB, &mut rng).unwrap();
        let r = check_degree_stability(&g1, &g2, k, STAB_EPS.0, STAB_EPS.1).unwrap();
        if r.local_k_distance == 0.0 {
            zero_cases += 1;
            if r.alpha_plus != r.alpha_minus {
                zero_fail.push(trial);
            }
        }
        degenerate += r.degenerate as usize;
        if let Some(rhs) = r.rhs {
            if r.lhs > rhs + 1e-12 {
                bound_fail.push(trial);
            }
        }
    }
    let elapsed = start.elapsed();
    let failing: BTreeSet<usize> = bound_fail.iter().chain(&zero_fail).copied().collect();
    let held = STAB_TRIALS - failing.len();
    outcome(
        bound_fail.is_empty() && zero_fail.is_empty() && elapsed < STAB_TIME_LIMIT,
        format!(
            "{held}/{STAB_TRIALS} trials hold; bound violated in {bound_fail:?}; {zero_cases} trials with zero local distance, unequal average degree in {zero_fail:?}; {degenerate} degenerate; {elapsed:.2?} (limit {STAB_TIME_LIMIT:?})"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = rng(1004);
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    let mut max_i = 0;
    for _ in 0..SERIES_GRAPHS {
        let g = random_graph(&mut rng, SERIES_NODES, 0.35, 3);
        let dm = pairwise_distance_matrix(&g, Filtration::attribute(Metric::Euclidean), 1, &WassersteinConfig::default())
            .unwrap();
        let (e1, e2) = resolve_thresholds(&dm, Threshold::Quantile(0.1), Threshold::Quantile(0.9)).unwrap();
        let t = build_timr(&g, &dm, e1, e2).unwrap();
        let l = topo_laplacian(&t, 0.5, 1).unwrap();
        let prop = Propagator::new(&l, SERIES_MU, SERIES_R).unwrap();
        max_i = prop.max_i();
        let exact = dense_resolvent(&l.matrix, g.features(), SERIES_MU);
        let rel = (&prop.apply(g.features()).unwrap() - &exact).norm() / exact.norm();
        let lambda_max = SymmetricEigen::new(l.matrix.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let q = SERIES_MU * lambda_max;
        if q < 1.0 {
            let bound = q.powi(max_i as i32 + 1) / (1.0 - q);
            bound_ok &= rel <= bound * (1.0 + 1e-9) + 1e-15;
        }
        worst = worst.max(rel);
    }
    outcome(
        worst <= SERIES_TOL && bound_ok,
        format!("max relative error {worst:e} (limit {SERIES_TOL:e}), max_i = {max_i}, analytic bound respected: {bound_ok}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = rng(1005);
    let g = random_graph(&mut rng, 10, 0.35, 3);
    let labels: Vec<usize> = (0..10).map(|u| u % 2).collect();
    let l = topo_rewire::trinet::laplacian_of(&BinaryAdjacency::from_graph(&g), 0.5, 1).unwrap();
    let prop = Propagator::new(&l, 0.5, 6.0).unwrap();
    let cfg = ModelConfig { hidden: vec![4], parallel: 2, seed: 5, ..Default::default() };
    let model = Model::init(3, 2, &cfg);
    let nodes = [0, 1, 2, 3, 4, 5];
    let loss = |m: &Model| m.loss_and_gradients(&prop, g.features(), &labels, &nodes, 5e-4, 0.0, None).unwrap();
    let (_, grads) = loss(&model);
    let mut worst: f64 = 0.0;
    let mut tensors = 0;
    for s in 0..model.stacks.len() {
        for li in 0..model.stacks[s].len() {
            let (r, c) = model.stacks[s][li].shape();
            let numeric = DMatrix::from_fn(r, c, |i, j| {
                let at = |delta: f64| {
                    let mut m = model.clone();
                    m.stacks[s][li][(i, j)] += delta;
                    loss(&m).0
                };
                (at(GRAD_STEP) - at(-GRAD_STEP)) / (2.0 * GRAD_STEP)
            });
            worst = worst.max((&grads[s][li] - &numeric).norm() / grads[s][li].norm().max(1e-12));
            tensors += 1;
        }
    }
    outcome(worst < GRAD_TOL, format!("{tensors} parameter tensors, max relative error {worst:e} (limit {GRAD_TOL:e})"))
}

fn criterion_6() -> Outcome {
    let mut rng = rng(1006);
    let mut problems = Vec::new();
    for i in 0..STAN_INSTANCES {
        let n = rng.random_range(4..=25);
        let p = rng.random_range(0.1..0.5);
        let g = random_graph(&mut rng, n, p, 3);
        let k = rng.random_range(1..=2);
        let dm = pairwise_distance_matrix(&g, Filtration::attribute(Metric::Euclidean), k, &WassersteinConfig::default())
            .unwrap();
        let cfg = StanConfig { k, ..Default::default() };
        let op = StanOperator::new(&g, &dm, cfg).unwrap();
        for u in 0..n {
            let (vs, ws) = op.weights(u);
            if vs.is_empty() {
                continue;
            }
            if (ws.iter().sum::<f64>() - 1.0).abs() > STAN_SUM_TOL {
                problems.push(format!("instance {i}: weights of {u} do not sum to one"));
            }
            for a in 0..vs.len() {
                for b in 0..vs.len() {
                    let (da, db) = (dm.get(u, vs[a]), dm.get(u, vs[b]));
                    let (wa, wb) = (ws[a], ws[b]);
                    let tie = (da - db).abs() <= STAN_TIE_TOL * da.max(db).max(1.0);
                    let ok = if tie {
                        (wa - wb).abs() <= STAN_TIE_TOL * wa.max(wb)
                    } else {
                        (da < db) == (wa > wb) && wa > 0.0 && wb > 0.0
                    };
                    if !ok {
                        problems.push(format!("instance {i}: weights of {u} not monotone (d {da}, {db}; w {wa}, {wb})"));
                    }
                }
            }
        }
        let frozen = StanOperator::new(&g, &dm, StanConfig { alpha: 0.0, iterations: 3, ..cfg }).unwrap();
        if frozen.run(g.features()).unwrap() != *g.features() {
            problems.push(format!("instance {i}: alpha = 0 changed the features"));
        }
    }
    outcome(
        problems.is_empty(),
        format!("{STAN_INSTANCES} instances, {} problems{}", problems.len(), problems.first().map_or(String::new(), |p| format!(" (first: {p})"))),
    )
}

fn criterion_7() -> Outcome {
    let mut mismatched = Vec::new();
    let mut cfg = PipelineConfig::default();
    cfg.model.epochs = 40;
    for i in 0..IDENTITY_GRAPHS {
        let g = PlantedPartition {
            n_nodes: 24 + i % 17,
            p_in: 0.25,
            p_out: 0.04,
            n_features: 4,
            seed: 7000 + i as u64,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let dm = distances(&g, &cfg, None).unwrap();
        let eps = identity_thresholds(&dm);
        let t = build_timr(&g, &dm, eps.0, eps.1).unwrap();
        if t.w_joint != t.w || t.w != BinaryAdjacency::from_graph(&g) {
            mismatched.push(format!("graph {i}: joint adjacency differs"));
            continue;
        }
        let full = prepare_with(&g, &dm, &cfg, Variant::Full, eps).unwrap();
        let base = prepare(&g, &dm, &cfg, Variant::NoTimr).unwrap();
        let seed = 31 + i as u64;
        let (_, a) = train_prepared(&g, &full, &cfg.model, seed).unwrap();
        let (_, b) = train_prepared(&g, &base, &cfg.model, seed).unwrap();
        let same = a.train_acc.to_bits() == b.train_acc.to_bits()
            && a.val_acc.to_bits() == b.val_acc.to_bits()
            && a.test_acc.to_bits() == b.test_acc.to_bits()
            && a.best_epoch == b.best_epoch;
        if !same {
            mismatched.push(format!("graph {i}: {a:?} vs {b:?}"));
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{IDENTITY_GRAPHS} graphs: joint = original and accuracies bit-identical to no_timr in {} ({:?})", IDENTITY_GRAPHS - mismatched.len(), mismatched.first()),
    )
}

fn reference_setup() -> (Graph, DatasetSource, PipelineConfig, Vec<u64>) {
    let spec = PlantedPartition::default();
    let g = spec.generate().unwrap();
    (g, DatasetSource::Synthetic(spec), PipelineConfig::default(), derive_seeds(0, ABLATION_SEEDS))
}

fn criterion_8() -> Outcome {
    let (g, source, cfg, seeds) = reference_setup();
    let start = Instant::now();
    let report = run_ablation(&g, source, &cfg, &[Variant::Full, Variant::NoTimr], &seeds, None).unwrap();
    let elapsed = start.elapsed();
    let full = report.cell(Variant::Full).unwrap().mean_test_acc;
    let base = report.cell(Variant::NoTimr).unwrap().mean_test_acc;
    let cmp = &report.comparisons[0];
    let p = cmp.t_test.as_ref().map_or(f64::NAN, |t| t.p_value);
    outcome(
        full - base >= ABLATION_MIN_GAIN && p < ABLATION_ALPHA && elapsed < ABLATION_TIME_LIMIT,
        format!(
            "full {:.2} vs no_timr {:.2} over {ABLATION_SEEDS} seeds: gain {:+.2} points (need >= {:.0}), one-sided p = {p:.3} (need < {ABLATION_ALPHA}); {elapsed:.0?}",
            100.0 * full,
            100.0 * base,
            100.0 * (full - base),
            100.0 * ABLATION_MIN_GAIN
        ),
    )
}

fn criterion_9() -> Outcome {
    let (g, source, cfg, seeds) = reference_setup();
    let report =
        attack_sweep(&g, source, &cfg, &[0.0, ATTACK_RATIO], &[Variant::Full, Variant::NoTimr], &seeds, None).unwrap();
    let drop = |v: Variant| report.drops.iter().find(|d| d.variant == v).unwrap().drop;
    let (full, base) = (drop(Variant::Full), drop(Variant::NoTimr));
    outcome(
        full < base,
        format!(
            "accuracy drop at ratio {ATTACK_RATIO}: full {:.2} points, no_timr {:.2} points ({ABLATION_SEEDS} seeds)",
            100.0 * full,
            100.0 * base
        ),
    )
}

fn cli(dir: &Path, cache: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_topo-rewire"))
        .args(args)
        .current_dir(dir)
        .env("TOPO_REWIRE_CACHE", cache)
        .output()
        .expect("spawn the CLI");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let small = "--set=epochs=15";
    let commands: Vec<Vec<&str>> = vec![
        vec!["synth", "--out", "ds", "--nodes", "48", "--seed", "3"],
        vec!["ph", "--data", "ds", "--filtration", "degree", "--k", "2"],
        vec!["distances", "--data", "ds", "--format", "json"],
        vec!["rewire", "--data", "ds", "--eps1", "q0.05", "--eps2", "q0.95"],
        vec!["stan", "--data", "ds", "--iters", "2", "--alpha", "0.3", "--aggregate", "mean"],
        vec!["train", "--data", "ds", small, "--set=seed=4"],
        vec!["attack-sweep", "--data", "ds", "--runs", "2", "--ratios", "0,0.5", small],
        vec!["eps-sweep", "--data", "ds", "--runs", "2", "--grid1", "0.1,0.5", "--grid2", "3,9", small],
        vec!["ablate", "--data", "ds", "--runs", "2", small],
        vec!["verify-stability", "--trials", "12", "--nodes", "8", "--k", "2", "--seed", "9"],
        vec!["probe-conjecture", "--data", "ds", "--edge", "0,47", "--eps1", "0.5", "--eps2", "4"],
    ];
    let mut differing = Vec::new();
    for args in &commands {
        // The first run fills a fresh cache, the second reads from it.
        let first = cli(dir, &dir.join("cache-a"), args);
        let second = cli(dir, &dir.join("cache-a"), args);
        let cold = cli(dir, &dir.join("cache-b"), args);
        if first != second || first != cold || first.is_empty() {
            differing.push(args[0]);
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} subcommands re-run three times; differing outputs: {differing:?}", commands.len()),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "persistence diagrams match the component-count oracle", criterion_1),
    (2, "exact Wasserstein distances and metric axioms", criterion_2),
    (3, "average-degree stability bound on random pairs", criterion_3),
    (4, "truncated resolvent series against the dense solve", criterion_4),
    (5, "gradients against central differences", criterion_5),
    (6, "topological attention weights", criterion_6),
    (7, "identity rewiring reproduces the unrewired arm", criterion_7),
    (8, "full pipeline beats the unrewired arm", criterion_8),
    (9, "full pipeline loses less accuracy under attack", criterion_9),
    (10, "CLI reports are byte-identical across runs", criterion_10),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}: {name}: {}", result.detail);
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
