//! Feature propagation from subgraphs, topology and attributes of neighbors.
//!
//! Each iteration replaces a node's features by
//! `f_up(aggr(X_u, alpha * sum_v w_uv X_v))` where the sum runs over the
//! node's k-hop neighbors and `w_uv` is a softmax of inverse topological
//! distances. Updates are Jacobi-style: every row reads the previous iterate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::wasserstein::TopoDistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Update {
    #[default]
    Identity,
    /// One dense layer with ReLU, weights drawn from `mlp_seed`.
    Mlp,
}

/// What the weighted side term sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideTerm {
    /// Neighbor features `X_v`.
    #[default]
    Neighbors,
    /// The node's own features, weighted by the same topological weights
    /// (no neighbor attributes enter).
    SelfOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StanConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub aggregate: Aggregate,
    pub update: Update,
    pub side_term: SideTerm,
    /// Hop radius of the neighbor set.
    pub k: usize,
    /// Added to distances before inversion. Logits are at most
    /// `1 / numeric_floor`, so the default 0.01 keeps every weight of a
    /// node with a zero-distance neighbor above the `f64` underflow limit.
    pub numeric_floor: f64,
    pub mlp_seed: u64,
}

impl Default for StanConfig {
    fn default() -> Self {
        StanConfig {
            iterations: 1,
            alpha: 0.2,
            aggregate: Aggregate::Sum,
            update: Update::Identity,
            side_term: SideTerm::Neighbors,
            k: 1,
            numeric_floor: 0.01,
            mlp_seed: 0,
        }
    }
}

impl StanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be >= 0 (got {})",
                self.alpha
            )));
        }
        if !(self.numeric_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "numeric floor must be > 0 (got {})",
                self.numeric_floor
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("STAN hop radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Normalized topological weights of `u` over `neighbors`:
/// `exp(1 / (d_uv + floor))`, normalized to sum to one.
pub fn topo_weights(
    u: usize,
    dm: &TopoDistanceMatrix,
    neighbors: &[usize],
    floor: f64,
) -> Result<Vec<f64>> {
    if neighbors.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "node {u} has no neighbors to weight"
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "numeric floor must be > 0 (got {floor})"
        )));
    }
    let logits: Vec<f64> = neighbors
        .iter()
        .map(|&v| 1.0 / (dm.get(u, v) + floor))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Per-node k-hop neighbor lists (center excluded, sorted).
pub fn neighbor_sets(g: &Graph, k: usize) -> Vec<Vec<usize>> {
    (0..g.n_nodes())
        .map(|u| {
            let mut vs: Vec<usize> = g.hop_distances(u, k).into_keys().filter(|&v| v != u).collect();
            vs.sort_unstable();
            vs
        })
        .collect()
}

struct MlpLayer {
    weight: DMatrix<f64>,
    bias: DVector<f64>,
}

impl MlpLayer {
    fn new(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (2 * width.max(1)) as f64).sqrt();
        let weight = DMatrix::from_fn(width, width, |_, _| rng.random_range(-limit..limit));
        MlpLayer {
            weight,
            bias: DVector::zeros(width),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.weight;
        for mut row in out.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v + self.bias[j]).max(0.0);
            }
        }
        out
    }
}

/// Precomputed neighbor sets and weights for repeated iterations.
pub struct StanOperator {
    cfg: StanConfig,
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl StanOperator {
    pub fn new(g: &Graph, dm: &TopoDistanceMatrix, cfg: StanConfig) -> Result<Self> {
        cfg.validate()?;
        if dm.n() != g.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix is {}x{0}, graph has {} nodes",
                dm.n(),
                g.n_nodes()
            )));
        }
        let neighbors = neighbor_sets(g, cfg.k);
        let weights = neighbors
            .iter()
            .enumerate()
            .map(|(u, vs)| {
                if vs.is_empty() {
                    Ok(Vec::new())
                } else {
                    topo_weights(u, dm, vs, cfg.numeric_floor)
                }
            })
            .collect::<Result<_>>()?;
        Ok(StanOperator {
            cfg,
            neighbors,
            weights,
        })
    }

    pub fn weights(&self, u: usize) -> (&[usize], &[f64]) {
        (&self.neighbors[u], &self.weights[u])
    }

    /// One propagation step.
    pub fn step(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.neighbors.len();
        if x.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows, expected {n}",
                x.nrows()
            )));
        }
        let alpha = self.cfg.alpha;
        let mut out = x.clone();
        for u in 0..n {
            let (vs, ws) = (&self.neighbors[u], &self.weights[u]);
            if vs.is_empty() {
                continue;
            }
            let mut side = vec![0.0; x.ncols()];
            for (&v, &w) in vs.iter().zip(ws) {
                let src = match self.cfg.side_term {
                    SideTerm::Neighbors => v,
                    SideTerm::SelfOnly => u,
                };
                for (s, val) in side.iter_mut().zip(x.row(src).iter()) {
                    *s += w * val;
                }
            }
            for (j, s) in side.into_iter().enumerate() {
                let own = x[(u, j)];
                out[(u, j)] = match self.cfg.aggregate {
                    Aggregate::Sum => own + alpha * s,
                    Aggregate::Mean => 0.5 * (own + alpha * s),
                };
            }
        }
        if self.cfg.update == Update::Mlp {
            out = MlpLayer::new(x.ncols(), self.cfg.mlp_seed).apply(&out);
        }
        Ok(out)
    }

    /// `iterations` steps starting from `x`.
    pub fn run(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut cur = x.clone();
        for _ in 0..self.cfg.iterations {
            cur = self.step(&cur)?;
        }
        Ok(cur)
    }
}

/// One STAN step on `features`.
pub fn stan_step(
    g: &Graph,
    features: &DMatrix<f64>,
    dm: &TopoDistanceMatrix,
    cfg: &StanConfig,
) -> Result<DMatrix<f64>> {
    StanOperator::new(g, dm, *cfg)?.step(features)
}

/// `cfg.iterations` STAN steps on `features`.
pub fn stan(
    g: &Graph,
    features: &DMatrix<f64>,
    dm: &TopoDistanceMatrix,
    cfg: &StanConfig,
) -> Result<DMatrix<f64>> {
    StanOperator::new(g, dm, *cfg)?.run(features)
}
