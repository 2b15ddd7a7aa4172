//! Executable checks for average-degree stability of degree-filtration
//! rewiring, and a measurement probe for algebraic connectivity under a
//! single edge addition.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::filtration::{node_diagrams, Filtration};
use crate::graph::{Graph, Metric};
use crate::timr::build_timr;
use crate::wasserstein::{distance_matrix, wasserstein, WassersteinConfig};

/// Optimal node bijection between two graphs under summed W1 distances of
/// their k-hop degree-filtration diagrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalKDistanceResult {
    pub value: f64,
    /// `best_bijection[u]` is the node of the second graph matched to `u`.
    pub best_bijection: Vec<usize>,
    pub per_node_costs: Vec<f64>,
}

/// `N x N` matrix of `d_k(u, v)` between nodes of `g1` and nodes of `g2`,
/// row-major.
pub fn cross_distances(g1: &Graph, g2: &Graph, k: usize) -> Result<Vec<f64>> {
    let d1 = node_diagrams(g1, Filtration::degree(), k)?;
    let d2 = node_diagrams(g2, Filtration::degree(), k)?;
    let mut out = Vec::with_capacity(d1.len() * d2.len());
    for a in &d1 {
        for b in &d2 {
            out.push(wasserstein(a, b, 1.0)?);
        }
    }
    Ok(out)
}

/// Minimum over node bijections of `sum_u d_k(u, phi(u))`.
pub fn local_k_distance(g1: &Graph, g2: &Graph, k: usize) -> Result<LocalKDistanceResult> {
    let n = g1.n_nodes();
    if g2.n_nodes() != n {
        return Err(Error::ShapeMismatch(format!(
            "graphs have {n} and {} nodes",
            g2.n_nodes()
        )));
    }
    let costs = cross_distances(g1, g2, k)?;
    let (value, best_bijection) = assignment::solve(&costs, n);
    let per_node_costs = best_bijection
        .iter()
        .enumerate()
        .map(|(u, &v)| costs[u * n + v])
        .collect();
    Ok(LocalKDistanceResult {
        value,
        best_bijection,
        per_node_costs,
    })
}

/// Both sides of the average-degree stability inequality for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    /// `|alpha_plus - alpha_minus|`
    pub lhs: f64,
    /// `K * D^k`, absent when `r0` is undefined.
    pub rhs: Option<f64>,
    pub k_constant: Option<f64>,
    pub r0: Option<f64>,
    pub local_k_distance: f64,
    pub degenerate: bool,
    /// Whether every applicable check passed.
    pub holds: bool,
}

/// Smallest positive gap between consecutive distinct values (0 included).
pub fn min_positive_gap(values: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().chain([0.0]).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
}

/// Checks `|alpha+ - alpha-| <= K * D^k(G+, G-)` with
/// `K = (2/m) * (2M / r0)`, `M = m(m-1)/2`, and that `D^k = 0` forces
/// equal average degrees. Both graphs must have equal node and edge counts.
///
/// `r0` is the smallest positive gap among all observed `d_k` values: the
/// within-graph pairs of both graphs and the cross pairs.
pub fn check_degree_stability(
    g1: &Graph,
    g2: &Graph,
    k: usize,
    eps1: f64,
    eps2: f64,
) -> Result<StabilityReport> {
    let m = g1.n_nodes();
    if g2.n_nodes() != m || g1.n_edges() != g2.n_edges() {
        return Err(Error::ShapeMismatch(format!(
            "graphs must share order and size (got {}/{} and {}/{})",
            m,
            g1.n_edges(),
            g2.n_nodes(),
            g2.n_edges()
        )));
    }
    let cfg = WassersteinConfig::with_p(1.0);
    let dm1 = distance_matrix(&node_diagrams(g1, Filtration::degree(), k)?, &cfg)?;
    let dm2 = distance_matrix(&node_diagrams(g2, Filtration::degree(), k)?, &cfg)?;
    let t1 = build_timr(g1, &dm1, eps1, eps2)?;
    let t2 = build_timr(g2, &dm2, eps1, eps2)?;
    let alpha_plus = t1.w_joint.average_degree();
    let alpha_minus = t2.w_joint.average_degree();
    let lhs = (alpha_plus - alpha_minus).abs();

    let cross = cross_distances(g1, g2, k)?;
    let (d, _) = assignment::solve(&cross, m);
    let values: Vec<f64> = dm1
        .upper_triangle()
        .into_iter()
        .chain(dm2.upper_triangle())
        .chain(cross)
        .collect();
    let r0 = min_positive_gap(&values);
    let pairs = (m * m.saturating_sub(1) / 2) as f64;
    let k_constant = r0.map(|r| (2.0 / m as f64) * (2.0 * pairs / r));
    let rhs = k_constant.map(|c| c * d);

    let zero_case_ok = d != 0.0 || alpha_plus == alpha_minus;
    let bound_ok = rhs.is_none_or(|r| lhs <= r + 1e-12);
    Ok(StabilityReport {
        alpha_plus,
        alpha_minus,
        lhs,
        rhs,
        k_constant,
        r0,
        local_k_distance: d,
        degenerate: r0.is_none(),
        holds: zero_case_ok && bound_ok,
    })
}

/// Settings for randomized checks of the stability inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrials {
    pub trials: usize,
    /// Node count of every pair.
    pub nodes: usize,
    pub k: usize,
    pub eps1: f64,
    pub eps2: f64,
    /// Edge probability of the first graph; the second gets the same number
    /// of edges placed uniformly.
    pub edge_prob: f64,
    pub seed: u64,
}

impl Default for StabilityTrials {
    fn default() -> Self {
        StabilityTrials {
            trials: 100,
            nodes: 10,
            k: 1,
            eps1: 0.5,
            eps2: 2.0,
            edge_prob: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub trial: usize,
    pub seed: u64,
    pub edges: usize,
    pub report: StabilityReport,
}

/// Uniform graph on `n` nodes with exactly `m` edges.
pub fn random_graph_with_edges(n: usize, m: usize, rng: &mut impl Rng) -> Result<Graph> {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .collect();
    if m > pairs.len() {
        return Err(Error::InsufficientNonEdges {
            requested: m,
            available: pairs.len(),
        });
    }
    for i in 0..m {
        let j = rng.random_range(i..pairs.len());
        pairs.swap(i, j);
    }
    pairs.truncate(m);
    Graph::structure_only(n, pairs)
}

/// Erdős–Rényi pair conditioned on equal node and edge counts.
pub fn random_pair(n: usize, edge_prob: f64, rng: &mut impl Rng) -> Result<(Graph, Graph)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    let g1 = Graph::structure_only(n, edges)?;
    let g2 = random_graph_with_edges(n, g1.n_edges(), rng)?;
    Ok((g1, g2))
}

/// Runs `cfg.trials` independent seeded checks.
pub fn run_stability_trials(cfg: &StabilityTrials) -> Result<Vec<StabilityTrial>> {
    if cfg.nodes < 2 {
        return Err(Error::InvalidParameter("stability trials need at least two nodes".into()));
    }
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (g1, g2) = random_pair(cfg.nodes, cfg.edge_prob, &mut rng)?;
            let report = check_degree_stability(&g1, &g2, cfg.k, cfg.eps1, cfg.eps2)?;
            Ok(StabilityTrial {
                trial,
                seed,
                edges: g1.n_edges(),
                report,
            })
        })
        .collect()
}

/// Eigenvalues of the combinatorial Laplacian `D - W`, ascending.
pub fn laplacian_spectrum(adj: &DMatrix<f64>) -> Vec<f64> {
    let n = adj.nrows();
    let mut lap = -adj.clone();
    for u in 0..n {
        lap[(u, u)] = adj.row(u).sum();
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn lambda2(adj: &DMatrix<f64>) -> Result<f64> {
    if adj.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "algebraic connectivity needs at least two nodes".into(),
        ));
    }
    let l2 = laplacian_spectrum(adj)[1];
    // eigensolver round-off around the zero eigenvalue
    Ok(if l2 < 1e-9 { 0.0 } else { l2 })
}

/// Second-smallest eigenvalue of the combinatorial Laplacian.
pub fn algebraic_connectivity(g: &Graph) -> Result<f64> {
    lambda2(&g.adjacency_matrix())
}

/// Both sides of the conjectured spectral inequality for one filtration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureSide {
    pub mode: String,
    pub lambda2_timr: f64,
    pub lambda2_timr_perturbed: f64,
    /// `|lambda2(T') - lambda2(T)|`
    pub lhs: f64,
    /// `|lambda2(G') - lambda2(G)|`
    pub graph_delta: f64,
    /// `lhs / graph_delta`, the smallest K that would satisfy the bound.
    pub implied_k: Option<f64>,
    pub timr_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub edge: (usize, usize),
    pub lambda2_graph: f64,
    pub lambda2_graph_perturbed: f64,
    pub sides: Vec<ConjectureSide>,
}

/// Measures the spectral conjecture for adding `edge` to `g`, under the
/// degree filtration and the attribute filtration (with `metric`). Nothing
/// is asserted.
pub fn conjecture_probe(
    g: &Graph,
    edge: (usize, usize),
    k: usize,
    eps1: f64,
    eps2: f64,
    metric: Metric,
) -> Result<ConjectureReport> {
    let (u, v) = edge;
    for w in [u, v] {
        if w >= g.n_nodes() {
            return Err(Error::InvalidNode {
                node: w,
                n_nodes: g.n_nodes(),
            });
        }
    }
    if u == v || g.has_edge(u, v) {
        return Err(Error::EdgePresent(u, v));
    }
    let perturbed = g.with_extra_edges([edge])?;
    let lg = algebraic_connectivity(g)?;
    let lgp = algebraic_connectivity(&perturbed)?;
    let graph_delta = (lgp - lg).abs();
    let cfg = WassersteinConfig::with_p(1.0);
    let mut sides = Vec::new();
    for (name, filtration) in [
        ("degree", Filtration::degree()),
        ("attribute", Filtration::attribute(metric)),
    ] {
        let timr = |h: &Graph| -> Result<_> {
            let dm = distance_matrix(&node_diagrams(h, filtration, k)?, &cfg)?;
            build_timr(h, &dm, eps1, eps2)
        };
        let t = timr(g)?;
        let tp = timr(&perturbed)?;
        let to_dense = |a: &crate::timr::BinaryAdjacency| {
            DMatrix::from_fn(a.n(), a.n(), |i, j| if a.get(i, j) { 1.0 } else { 0.0 })
        };
        let l_t = lambda2(&to_dense(&t.w_joint))?;
        let l_tp = lambda2(&to_dense(&tp.w_joint))?;
        let lhs = (l_tp - l_t).abs();
        sides.push(ConjectureSide {
            mode: name.to_string(),
            lambda2_timr: l_t,
            lambda2_timr_perturbed: l_tp,
            lhs,
            graph_delta,
            implied_k: (graph_delta > 0.0).then(|| lhs / graph_delta),
            timr_identical: t.w_joint == tp.w_joint,
        });
    }
    Ok(ConjectureReport {
        edge,
        lambda2_graph: lg,
        lambda2_graph_perturbed: lgp,
        sides,
    })
}
