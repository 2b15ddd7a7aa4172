//! Topology-induced multigraph representation and the joint rewired graph.
//!
//! For thresholds `eps1 < eps2`, a pair of nodes whose neighborhood diagrams
//! are closer than `eps1` gets a positive topological edge, a pair farther
//! than `eps2` gets a negative one. The joint adjacency keeps a pair iff
//! `w + w_plus - w_minus > 0`: similar pairs gain an edge, dissimilar edges
//! are dropped, and pairs in between keep their original adjacency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::wasserstein::TopoDistanceMatrix;

/// Dense symmetric 0/1 matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryAdjacency {
    n: usize,
    bits: Vec<bool>,
}

impl BinaryAdjacency {
    pub fn empty(n: usize) -> Self {
        BinaryAdjacency {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_graph(g: &Graph) -> Self {
        let mut a = Self::empty(g.n_nodes());
        for (u, v) in g.edges() {
            a.set(u, v, true);
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.n + v]
    }

    /// Sets both `(u, v)` and `(v, u)`.
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[u * self.n + v] = value;
        self.bits[v * self.n + u] = value;
    }

    /// Pairs `(u, v)` with `u < v` that are set.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                if self.get(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }

    /// Average degree `2|E| / N`.
    pub fn average_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            2.0 * self.n_edges() as f64 / self.n as f64
        }
    }
}

/// The triple `(W, W_plus, W_minus)` and the joint adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct TimrGraph {
    pub w: BinaryAdjacency,
    pub w_plus: BinaryAdjacency,
    pub w_minus: BinaryAdjacency,
    pub w_joint: BinaryAdjacency,
    pub eps1: f64,
    pub eps2: f64,
}

/// Summary of how the joint graph differs from the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewireStats {
    pub original_edges: usize,
    pub joint_edges: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub plus_pairs: usize,
    pub minus_pairs: usize,
}

impl TimrGraph {
    /// Multiedge `(w, plus, minus)` of a pair.
    pub fn multiedge(&self, u: usize, v: usize) -> (i8, i8, i8) {
        (
            self.w.get(u, v) as i8,
            self.w_plus.get(u, v) as i8,
            -(self.w_minus.get(u, v) as i8),
        )
    }

    pub fn stats(&self) -> RewireStats {
        let mut added = 0;
        let mut removed = 0;
        for u in 0..self.w.n() {
            for v in (u + 1)..self.w.n() {
                match (self.w.get(u, v), self.w_joint.get(u, v)) {
                    (false, true) => added += 1,
                    (true, false) => removed += 1,
                    _ => {}
                }
            }
        }
        RewireStats {
            original_edges: self.w.n_edges(),
            joint_edges: self.w_joint.n_edges(),
            edges_added: added,
            edges_removed: removed,
            plus_pairs: self.w_plus.n_edges(),
            minus_pairs: self.w_minus.n_edges(),
        }
    }

    /// The joint adjacency as a graph sharing the features, labels and masks
    /// of `g`.
    pub fn joint_graph(&self, g: &Graph) -> Result<Graph> {
        g.with_edges(self.w_joint.edges())
    }
}

fn check_thresholds(eps1: f64, eps2: f64) -> Result<()> {
    if !(eps1 >= 0.0) || !(eps1 < eps2) {
        return Err(Error::InvalidThresholds { eps1, eps2 });
    }
    Ok(())
}

/// Multiedge of a single pair with strict threshold comparisons:
/// `(1[edge], 1[dist < eps1], -1[dist > eps2])`.
pub fn multiedge(dist: f64, has_edge: bool, eps1: f64, eps2: f64) -> Result<(i8, i8, i8)> {
    check_thresholds(eps1, eps2)?;
    if !(dist >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distance must be >= 0 (got {dist})"
        )));
    }
    Ok((
        has_edge as i8,
        (dist < eps1) as i8,
        -((dist > eps2 && dist.is_finite()) as i8),
    ))
}

/// Builds the multigraph over all node pairs.
pub fn build_timr(g: &Graph, dm: &TopoDistanceMatrix, eps1: f64, eps2: f64) -> Result<TimrGraph> {
    build_timr_with(g, dm, eps1, eps2, None)
}

/// Like [`build_timr`]; with `candidate_hops = Some(h)` positive edges are
/// only proposed between nodes at most `h` hops apart.
pub fn build_timr_with(
    g: &Graph,
    dm: &TopoDistanceMatrix,
    eps1: f64,
    eps2: f64,
    candidate_hops: Option<usize>,
) -> Result<TimrGraph> {
    check_thresholds(eps1, eps2)?;
    let n = g.n_nodes();
    if dm.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "distance matrix is {}x{0}, graph has {n} nodes",
            dm.n()
        )));
    }
    let w = BinaryAdjacency::from_graph(g);
    let mut w_plus = BinaryAdjacency::empty(n);
    let mut w_minus = BinaryAdjacency::empty(n);
    let mut w_joint = BinaryAdjacency::empty(n);
    for u in 0..n {
        let reachable = candidate_hops.map(|h| g.hop_distances(u, h));
        for v in (u + 1)..n {
            let (e, mut plus, minus) = multiedge(dm.get(u, v), w.get(u, v), eps1, eps2)?;
            if let Some(reach) = &reachable {
                if !reach.contains_key(&v) {
                    plus = 0;
                }
            }
            w_plus.set(u, v, plus == 1);
            w_minus.set(u, v, minus == -1);
            w_joint.set(u, v, e + plus + minus > 0);
        }
    }
    Ok(TimrGraph {
        w,
        w_plus,
        w_minus,
        w_joint,
        eps1,
        eps2,
    })
}

/// Linear-interpolation quantile of sorted data (numpy's default rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `(eps1, eps2)` as the `q1`- and `q2`-quantiles of the off-diagonal
/// distances.
pub fn quantile_thresholds(dm: &TopoDistanceMatrix, q1: f64, q2: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&q1) || !(0.0..=1.0).contains(&q2) || q1 >= q2 {
        return Err(Error::InvalidParameter(format!(
            "quantiles must satisfy 0 <= q1 < q2 <= 1 (got {q1}, {q2})"
        )));
    }
    let mut values = dm.upper_triangle();
    if values.is_empty() {
        return Err(Error::InvalidParameter(
            "distance matrix has no off-diagonal entries".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    let (eps1, eps2) = (quantile(&values, q1), quantile(&values, q2));
    check_thresholds(eps1, eps2)?;
    Ok((eps1, eps2))
}

/// A threshold given either as a raw distance or as a quantile of the
/// observed distances (`q0.05`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Value(f64),
    Quantile(f64),
}

impl Threshold {
    pub fn resolve(self, sorted_distances: &[f64]) -> Result<f64> {
        match self {
            Threshold::Value(v) => Ok(v),
            Threshold::Quantile(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidParameter(format!("quantile {q} not in [0, 1]")));
                }
                if sorted_distances.is_empty() {
                    return Err(Error::InvalidParameter(
                        "distance matrix has no off-diagonal entries".into(),
                    ));
                }
                Ok(quantile(sorted_distances, q))
            }
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse threshold `{s}`"));
        match s.strip_prefix('q') {
            Some(q) => q.parse().map(Threshold::Quantile).map_err(|_| bad()),
            None if s == "inf" => Ok(Threshold::Value(f64::INFINITY)),
            None => s.parse().map(Threshold::Value).map_err(|_| bad()),
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Value(v) => write!(f, "{v}"),
            Threshold::Quantile(q) => write!(f, "q{q}"),
        }
    }
}

/// Resolves both thresholds against `dm`.
pub fn resolve_thresholds(
    dm: &TopoDistanceMatrix,
    eps1: Threshold,
    eps2: Threshold,
) -> Result<(f64, f64)> {
    let mut values = dm.upper_triangle();
    values.sort_by(f64::total_cmp);
    let (e1, e2) = (eps1.resolve(&values)?, eps2.resolve(&values)?);
    check_thresholds(e1, e2)?;
    Ok((e1, e2))
}

/// Thresholds that leave every pair in the neutral band, so the joint graph
/// equals the original: half the smallest and twice the largest distance
/// (with a small positive fallback when those are zero).
pub fn identity_thresholds(dm: &TopoDistanceMatrix) -> (f64, f64) {
    let values = dm.upper_triangle();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(0.0, f64::max);
    let eps1 = if min.is_finite() { min / 2.0 } else { 0.0 };
    let eps2 = (max * 2.0).max(1.0);
    (eps1, eps2)
}

/// Evenly spaced grid `start, start + step, ... <= stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect()
}
