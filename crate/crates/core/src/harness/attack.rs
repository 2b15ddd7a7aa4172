//! Random fake-edge injection.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Fake edges per existing edge, in `[0, 1]`.
    pub ratio: f64,
    pub seed: u64,
}

/// Number of edges injected into `g` under `ratio`.
pub fn attack_size(g: &Graph, ratio: f64) -> usize {
    (ratio * g.n_edges() as f64).round() as usize
}

/// Pairs chosen uniformly without replacement among the non-edges of `g`.
pub fn sample_non_edges(g: &Graph, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = g.n_nodes();
    let available = n * n.saturating_sub(1) / 2 - g.n_edges();
    if count > available {
        return Err(Error::InsufficientNonEdges {
            requested: count,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if 2 * count <= available {
        let mut picked = BTreeSet::new();
        let mut order = Vec::with_capacity(count);
        while order.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            let pair = (u.min(v), u.max(v));
            if u != v && !g.has_edge(u, v) && picked.insert(pair) {
                order.push(pair);
            }
        }
        Ok(order)
    } else {
        let all: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        Ok(index::sample(&mut rng, all.len(), count)
            .into_iter()
            .map(|i| all[i])
            .collect())
    }
}

/// `g` with `round(ratio * |E|)` fake edges injected. Features, labels and
/// masks are untouched.
pub fn random_attack(g: &Graph, cfg: AttackConfig) -> Result<Graph> {
    if !(0.0..=1.0).contains(&cfg.ratio) {
        return Err(Error::InvalidParameter(format!(
            "attack ratio must lie in [0, 1] (got {})",
            cfg.ratio
        )));
    }
    let fake = sample_non_edges(g, attack_size(g, cfg.ratio), cfg.seed)?;
    g.with_extra_edges(fake)
}
