//! Attributed graphs and k-hop neighborhoods.
//!
//! A [`Graph`] is undirected and simple: directed input is symmetrized and
//! binarized on ingestion, self-loops are dropped. Features live in a dense
//! `N x F` matrix. [`Neighborhood`]s are induced k-hop subgraphs, optionally
//! carrying attribute-distance edge weights.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance between node feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Hamming,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Hamming => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "hamming" => Ok(Metric::Hamming),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

/// Train / validation / test node masks. Always disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(n: usize) -> Self {
        Masks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    /// Builds masks from node lists, rejecting overlaps and out-of-range ids.
    pub fn from_lists(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut masks = Masks::empty(n);
        for (list, mask) in [
            (train, &mut masks.train),
            (val, &mut masks.val),
            (test, &mut masks.test),
        ] {
            for &u in list {
                if u >= n {
                    return Err(Error::InvalidNode { node: u, n_nodes: n });
                }
                mask[u] = true;
            }
        }
        masks.validate(n)?;
        Ok(masks)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "mask lengths ({}, {}, {}) must equal node count {n}",
                self.train.len(),
                self.val.len(),
                self.test.len()
            )));
        }
        for u in 0..n {
            let hits = self.train[u] as u8 + self.val[u] as u8 + self.test[u] as u8;
            if hits > 1 {
                return Err(Error::InvalidParameter(format!(
                    "node {u} belongs to more than one split"
                )));
            }
        }
        Ok(())
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn val_nodes(&self) -> Vec<usize> {
        indices(&self.val)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        indices(&self.test)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// Undirected simple graph with node features, optional labels and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    n_edges: usize,
    features: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    masks: Masks,
}

impl Graph {
    /// Builds an undirected graph. Self-loops are dropped and duplicate pairs
    /// collapse to a single edge.
    pub fn new<I>(n_nodes: usize, edges: I, features: DMatrix<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if features.nrows() != n_nodes {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows, expected {n_nodes}",
                features.nrows()
            )));
        }
        let mut adj = vec![Vec::new(); n_nodes];
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n_nodes {
                    return Err(Error::InvalidNode { node: w, n_nodes });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut n_edges = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            n_edges += list.len();
        }
        Ok(Graph {
            adj,
            n_edges: n_edges / 2,
            features,
            labels: None,
            masks: Masks::empty(n_nodes),
        })
    }

    /// Builds a graph from directed arcs via `W' = (W^T + W) / 2`, keeping
    /// every pair with a positive entry.
    pub fn from_directed<I>(n_nodes: usize, arcs: I, features: DMatrix<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        // (W^T + W)/2 is positive exactly where either arc exists.
        Self::new(n_nodes, arcs, features)
    }

    /// Graph with no node features (a zero-width feature matrix).
    pub fn structure_only<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(n_nodes, edges, DMatrix::zeros(n_nodes, 0))
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n_nodes()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_masks(mut self, masks: Masks) -> Result<Self> {
        masks.validate(self.n_nodes())?;
        self.masks = masks;
        Ok(self)
    }

    pub fn with_features(mut self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows, expected {}",
                features.nrows(),
                self.n_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&c| c + 1)
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj
            .get(u)
            .is_some_and(|list| list.binary_search(&v).is_ok())
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Number of neighbors of every node.
    pub fn degree_vector(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut w = DMatrix::zeros(n, n);
        for (u, v) in self.edges() {
            w[(u, v)] = 1.0;
            w[(v, u)] = 1.0;
        }
        w
    }

    pub fn feature_row(&self, u: usize) -> Vec<f64> {
        self.features.row(u).iter().copied().collect()
    }

    /// Returns a copy with the given extra edges; features, labels and masks
    /// are carried over untouched.
    pub fn with_extra_edges<I>(&self, extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let edges: Vec<_> = self.edges().chain(extra).collect();
        let mut g = Graph::new(self.n_nodes(), edges, self.features.clone())?;
        g.labels = self.labels.clone();
        g.masks = self.masks.clone();
        Ok(g)
    }

    /// Returns a copy with the edge set replaced.
    pub fn with_edges<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::new(self.n_nodes(), edges, self.features.clone())?;
        g.labels = self.labels.clone();
        g.masks = self.masks.clone();
        Ok(g)
    }

    /// Relabels nodes so that old node `u` becomes `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        if perm.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
        }
        let mut features = DMatrix::zeros(n, self.n_features());
        for u in 0..n {
            features.set_row(perm[u], &self.features.row(u));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut g = Graph::new(n, edges, features)?;
        if let Some(labels) = &self.labels {
            let mut relabeled = vec![0; n];
            for u in 0..n {
                relabeled[perm[u]] = labels[u];
            }
            g.labels = Some(relabeled);
        }
        let mut masks = Masks::empty(n);
        for u in 0..n {
            masks.train[perm[u]] = self.masks.train[u];
            masks.val[perm[u]] = self.masks.val[u];
            masks.test[perm[u]] = self.masks.test[u];
        }
        g.masks = masks;
        Ok(g)
    }

    /// BFS hop distances from `u`, truncated at `max_hops`. Unreached nodes
    /// are absent from the map.
    pub fn hop_distances(&self, u: usize, max_hops: usize) -> HashMap<usize, usize> {
        let mut dist = HashMap::from([(u, 0)]);
        let mut queue = VecDeque::from([u]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if d == max_hops {
                continue;
            }
            for &w in &self.adj[v] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected-component label of every node (labels are the smallest node
    /// id of each component).
    pub fn components(&self) -> Vec<usize> {
        let n = self.n_nodes();
        let mut comp = vec![usize::MAX; n];
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = s;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &w in &self.adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = s;
                        stack.push(w);
                    }
                }
            }
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    fn check_binary(&self, nodes: &[usize]) -> Result<()> {
        for &u in nodes {
            if let Some(&value) = self.features.row(u).iter().find(|&&x| x != 0.0 && x != 1.0) {
                return Err(Error::NonBinaryFeatures { node: u, value });
            }
        }
        Ok(())
    }
}

/// How neighborhood edges are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeWeighting {
    /// `tau = 1` on every edge.
    Unweighted,
    /// `tau_vw = ||X_v - X_w||` under the given metric.
    Attribute(Metric),
}

/// Induced k-hop subgraph around a center node.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    center: usize,
    hop_radius: usize,
    members: Vec<usize>,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl Neighborhood {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn hop_radius(&self) -> usize {
        self.hop_radius
    }

    /// Member node ids (global), sorted ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Induced edges as pairs of *local* indices into [`members`](Self::members), `i < j`.
    pub fn local_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Induced edges as pairs of global node ids.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .map(|&(i, j)| (self.members[i], self.members[j]))
    }

    /// Edge weights parallel to [`local_edges`](Self::local_edges); `None` in unweighted mode.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Weight of the edge between global nodes `v` and `w`, if induced.
    /// Unweighted neighborhoods report 1.
    pub fn weight(&self, v: usize, w: usize) -> Option<f64> {
        let i = self.members.binary_search(&v).ok()?;
        let j = self.members.binary_search(&w).ok()?;
        let key = (i.min(j), i.max(j));
        let pos = self.edges.iter().position(|&e| e == key)?;
        Some(self.weights.as_ref().map_or(1.0, |ws| ws[pos]))
    }
}

/// Extracts the induced subgraph on all nodes within `k` hops of `u`.
pub fn k_hop_neighborhood(
    g: &Graph,
    u: usize,
    k: usize,
    weighting: EdgeWeighting,
) -> Result<Neighborhood> {
    if u >= g.n_nodes() {
        return Err(Error::InvalidNode {
            node: u,
            n_nodes: g.n_nodes(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("hop radius k must be >= 1".into()));
    }
    let mut members: Vec<usize> = g.hop_distances(u, k).into_keys().collect();
    members.sort_unstable();
    if let EdgeWeighting::Attribute(Metric::Hamming) = weighting {
        g.check_binary(&members)?;
    }
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut edges = Vec::new();
    for (i, &v) in members.iter().enumerate() {
        for &w in g.neighbors(v) {
            if let Some(&j) = local.get(&w) {
                if j > i {
                    edges.push((i, j));
                }
            }
        }
    }
    let weights = match weighting {
        EdgeWeighting::Unweighted => None,
        EdgeWeighting::Attribute(metric) => Some(
            edges
                .iter()
                .map(|&(i, j)| {
                    let a = g.features.row(members[i]);
                    let b = g.features.row(members[j]);
                    let a: Vec<f64> = a.iter().copied().collect();
                    let b: Vec<f64> = b.iter().copied().collect();
                    metric.distance(&a, &b)
                })
                .collect(),
        ),
    };
    Ok(Neighborhood {
        center: u,
        hop_radius: k,
        members,
        edges,
        weights,
    })
}

/// Number of neighbors of each node.
pub fn degree_vector(g: &Graph) -> Vec<usize> {
    g.degree_vector()
}
