//! On-disk cache of pairwise distance matrices keyed by a content hash of
//! everything the matrix depends on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::filtration::Filtration;
use crate::graph::Graph;
use crate::wasserstein::{pairwise_distance_matrix, TopoDistanceMatrix, WassersteinConfig};

pub const CACHE_ENV: &str = "TOPO_REWIRE_CACHE";

#[derive(Debug, Clone)]
pub struct DistanceCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    n: usize,
    values: Vec<f64>,
}

impl DistanceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DistanceCache { dir: dir.into() }
    }

    /// `$TOPO_REWIRE_CACHE`, or `.cache` in the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).map_or_else(|| PathBuf::from(".cache"), PathBuf::from))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("dm-{key}.json"))
    }

    /// Loads the matrix for `key` or computes and stores it.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<TopoDistanceMatrix>,
    ) -> Result<TopoDistanceMatrix> {
        let path = self.path(key);
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(s) = serde_json::from_slice::<Stored>(&bytes) {
                if let Ok(dm) = TopoDistanceMatrix::from_values(s.n, s.values) {
                    return Ok(dm);
                }
            }
        }
        let dm = compute()?;
        std::fs::create_dir_all(&self.dir)?;
        let stored = Stored {
            n: dm.n(),
            values: (0..dm.n()).flat_map(|u| dm.row(u).to_vec()).collect(),
        };
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(&stored)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(dm)
    }
}

/// Hex digest of the graph structure, the features when the filtration
/// reads them, and the distance parameters.
pub fn distance_key(g: &Graph, filtration: Filtration, k: usize, cfg: &WassersteinConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"topo-rewire-dm-v1");
    h.update((g.n_nodes() as u64).to_le_bytes());
    for (u, v) in g.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    if let Filtration::Attribute { .. } = filtration {
        h.update((g.n_features() as u64).to_le_bytes());
        for x in g.features().transpose().iter() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    h.update(serde_json::to_vec(&filtration).unwrap_or_default());
    h.update((k as u64).to_le_bytes());
    h.update(cfg.p.to_bits().to_le_bytes());
    h.update(cfg.essential_penalty.map_or(u64::MAX, f64::to_bits).to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Pairwise distances, read from or written to `cache` when given.
pub fn cached_distances(
    g: &Graph,
    filtration: Filtration,
    k: usize,
    cfg: &WassersteinConfig,
    cache: Option<&DistanceCache>,
) -> Result<TopoDistanceMatrix> {
    let compute = || pairwise_distance_matrix(g, filtration, k, cfg);
    match cache {
        Some(c) => c.get_or_compute(&distance_key(g, filtration, k, cfg), compute),
        None => compute(),
    }
}
