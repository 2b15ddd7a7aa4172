//! Seeded planted-partition graphs with class-dependent Gaussian features.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Masks};

/// Stochastic block model with equal-size blocks. Class `c` features are
/// `N(mean_shift * e_(c mod F), noise_std^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub n_nodes: usize,
    pub n_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub n_features: usize,
    pub mean_shift: f64,
    pub noise_std: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            n_nodes: 200,
            n_blocks: 2,
            p_in: 0.08,
            p_out: 0.01,
            n_features: 8,
            mean_shift: 1.0,
            noise_std: 1.0,
            train_frac: 0.1,
            val_frac: 0.2,
            seed: 0,
        }
    }
}

impl PlantedPartition {
    fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_blocks == 0 || self.n_nodes < self.n_blocks || self.n_features == 0 {
            return Err(Error::InvalidParameter(
                "need at least one node per block and one feature".into(),
            ));
        }
        if !prob(self.p_in) || !prob(self.p_out) {
            return Err(Error::InvalidParameter("edge probabilities must lie in [0, 1]".into()));
        }
        if !(self.noise_std >= 0.0)
            || !prob(self.train_frac)
            || !prob(self.val_frac)
            || self.train_frac + self.val_frac > 1.0
        {
            return Err(Error::InvalidParameter(
                "noise must be >= 0 and split fractions must sum to at most 1".into(),
            ));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Graph> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.n_nodes;
        let labels: Vec<usize> = (0..n).map(|u| u * self.n_blocks / n).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let p = if labels[u] == labels[v] { self.p_in } else { self.p_out };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let noise = Normal::new(0.0, self.noise_std)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut features = DMatrix::zeros(n, self.n_features);
        for u in 0..n {
            for j in 0..self.n_features {
                let mean = if labels[u] % self.n_features == j { self.mean_shift } else { 0.0 };
                features[(u, j)] = mean + noise.sample(&mut rng);
            }
        }
        let masks = stratified_split(&labels, self.n_blocks, self.train_frac, self.val_frac, &mut rng)?;
        Graph::new(n, edges, features)?
            .with_labels(labels)?
            .with_masks(masks)
    }
}

/// Per-class shuffled split with `round(frac * class_size)` train and
/// validation nodes; the rest are test nodes.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    train_frac: f64,
    val_frac: f64,
    rng: &mut impl Rng,
) -> Result<Masks> {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&u| labels[u] == c).collect();
        members.shuffle(rng);
        let n_train = (train_frac * members.len() as f64).round() as usize;
        let n_val = ((val_frac * members.len() as f64).round() as usize).min(members.len() - n_train);
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    Masks::from_lists(labels.len(), &train, &val, &test)
}
