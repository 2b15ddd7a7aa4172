//! p-Wasserstein distance between persistence diagrams.
//!
//! Finite points are matched on the diagonal-augmented bipartite problem:
//! each diagram is padded with one diagonal slot per finite point of the
//! other diagram, point-to-point costs are `||x - y||_inf^p`, a point sent to
//! the diagonal pays `((death - birth) / 2)^p`, and diagonal-to-diagonal is
//! free. Essential classes are matched among themselves on birth values; if
//! their counts differ, every unmatched class pays `essential_penalty^p`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::filtration::{node_diagrams, Filtration, PersistenceDiagram};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WassersteinConfig {
    pub p: f64,
    /// Cost of an unmatched essential class. `None` selects half the largest
    /// finite death in either diagram (0 if both have no finite points).
    pub essential_penalty: Option<f64>,
}

impl Default for WassersteinConfig {
    fn default() -> Self {
        WassersteinConfig {
            p: 1.0,
            essential_penalty: None,
        }
    }
}

impl WassersteinConfig {
    pub fn with_p(p: f64) -> Self {
        WassersteinConfig {
            p,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Wasserstein order p must be >= 1 (got {})",
                self.p
            )));
        }
        if let Some(pen) = self.essential_penalty {
            if !(pen >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "essential penalty must be >= 0 (got {pen})"
                )));
            }
        }
        Ok(())
    }
}

/// Row or column provenance in the augmented matching problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Finite point with the given index in its diagram.
    Point(usize),
    /// Diagonal copy reserved for the given point of the other diagram.
    Diagonal(usize),
}

/// Square cost matrix of the diagonal-augmented matching between the finite
/// parts of two diagrams.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingProblem {
    pub size: usize,
    /// Row-major `size x size` costs, already raised to the power `p`.
    pub costs: Vec<f64>,
    pub rows: Vec<Slot>,
    pub cols: Vec<Slot>,
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn diagonal_cost(x: (f64, f64)) -> f64 {
    (x.1 - x.0) / 2.0
}

impl MatchingProblem {
    pub fn new(d1: &PersistenceDiagram, d2: &PersistenceDiagram, p: f64) -> Self {
        let (n, m) = (d1.pairs.len(), d2.pairs.len());
        let size = n + m;
        let rows: Vec<Slot> = (0..n).map(Slot::Point).chain((0..m).map(Slot::Diagonal)).collect();
        let cols: Vec<Slot> = (0..m).map(Slot::Point).chain((0..n).map(Slot::Diagonal)).collect();
        let mut costs = vec![0.0; size * size];
        for (i, row) in rows.iter().enumerate() {
            for (j, col) in cols.iter().enumerate() {
                costs[i * size + j] = match (*row, *col) {
                    (Slot::Point(a), Slot::Point(b)) => linf(d1.pairs[a], d2.pairs[b]).powf(p),
                    (Slot::Point(a), Slot::Diagonal(_)) => diagonal_cost(d1.pairs[a]).powf(p),
                    (Slot::Diagonal(_), Slot::Point(b)) => diagonal_cost(d2.pairs[b]).powf(p),
                    (Slot::Diagonal(_), Slot::Diagonal(_)) => 0.0,
                };
            }
        }
        MatchingProblem {
            size,
            costs,
            rows,
            cols,
        }
    }

    /// Optimal total cost (sum of p-th powers) and the column of each row.
    pub fn solve(&self) -> (f64, Vec<usize>) {
        assignment::solve(&self.costs, self.size)
    }
}

/// Sum of p-th powers for the essential-class matching.
fn essential_cost(e1: &[f64], e2: &[f64], p: f64, penalty: f64) -> f64 {
    let size = e1.len().max(e2.len());
    if size == 0 {
        return 0.0;
    }
    let dummy = penalty.powf(p);
    let mut costs = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            costs[i * size + j] = match (e1.get(i), e2.get(j)) {
                (Some(a), Some(b)) => (a - b).abs().powf(p),
                (None, None) => 0.0,
                _ => dummy,
            };
        }
    }
    assignment::solve(&costs, size).0
}

/// Penalty used for unmatched essential classes between `d1` and `d2`.
pub fn default_essential_penalty(d1: &PersistenceDiagram, d2: &PersistenceDiagram) -> f64 {
    let max_death = d1
        .max_death()
        .into_iter()
        .chain(d2.max_death())
        .fold(0.0f64, f64::max);
    max_death / 2.0
}

/// Wasserstein distance of order `p` with the default essential penalty.
pub fn wasserstein(d1: &PersistenceDiagram, d2: &PersistenceDiagram, p: f64) -> Result<f64> {
    wasserstein_with(d1, d2, &WassersteinConfig::with_p(p))
}

pub fn wasserstein_with(
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
    cfg: &WassersteinConfig,
) -> Result<f64> {
    cfg.validate()?;
    if d1.dim != d2.dim {
        return Err(Error::DimensionMismatch(d1.dim, d2.dim));
    }
    let finite = MatchingProblem::new(d1, d2, cfg.p).solve().0;
    let penalty = cfg
        .essential_penalty
        .unwrap_or_else(|| default_essential_penalty(d1, d2));
    let essential = essential_cost(&d1.essential, &d2.essential, cfg.p, penalty);
    let total = (finite + essential).max(0.0);
    Ok(if cfg.p == 1.0 {
        total
    } else {
        total.powf(1.0 / cfg.p)
    })
}

/// Dense symmetric `N x N` matrix of pairwise diagram distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoDistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl TopoDistanceMatrix {
    /// Builds from row-major values, checking symmetry and a zero diagonal.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        for u in 0..n {
            if values[u * n + u] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "distance matrix diagonal entry {u} is nonzero"
                )));
            }
            for v in (u + 1)..n {
                let d = values[u * n + v];
                if d != values[v * n + u] || !(d >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "distance matrix entry ({u}, {v}) is asymmetric or negative"
                    )));
                }
            }
        }
        Ok(TopoDistanceMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.values[u * self.n..(u + 1) * self.n]
    }

    /// Values strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for u in 0..self.n {
            out.extend_from_slice(&self.row(u)[u + 1..]);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for u in 0..self.n {
            wtr.write_record(self.row(u).iter().map(|d| d.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Nonzero upper-triangle entries as `{"n": N, "triples": [[u, v, d], ...]}`.
    pub fn to_sparse_json(&self) -> serde_json::Value {
        let triples: Vec<serde_json::Value> = (0..self.n)
            .flat_map(|u| ((u + 1)..self.n).map(move |v| (u, v)))
            .filter(|&(u, v)| self.get(u, v) != 0.0)
            .map(|(u, v)| serde_json::json!([u, v, self.get(u, v)]))
            .collect();
        serde_json::json!({ "n": self.n, "triples": triples })
    }
}

/// Pairwise distances between the given diagrams.
pub fn distance_matrix(
    diagrams: &[PersistenceDiagram],
    cfg: &WassersteinConfig,
) -> Result<TopoDistanceMatrix> {
    cfg.validate()?;
    let n = diagrams.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|u| {
            ((u + 1)..n)
                .map(|v| wasserstein_with(&diagrams[u], &diagrams[v], cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; n * n];
    for (u, row) in rows.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let v = u + 1 + off;
            values[u * n + v] = d;
            values[v * n + u] = d;
        }
    }
    Ok(TopoDistanceMatrix { n, values })
}

/// Distances between the k-hop neighborhood diagrams of every node pair.
pub fn pairwise_distance_matrix(
    g: &Graph,
    filtration: Filtration,
    k: usize,
    cfg: &WassersteinConfig,
) -> Result<TopoDistanceMatrix> {
    cfg.validate()?;
    let diagrams = node_diagrams(g, filtration, k)?;
    distance_matrix(&diagrams, cfg)
}
