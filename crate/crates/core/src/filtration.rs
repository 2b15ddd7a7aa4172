//! Zero-dimensional persistent homology of neighborhood sublevel filtrations.
//!
//! Two filtrations are supported. In the degree filtration a node enters at
//! its degree and an edge at the larger degree of its endpoints. In the
//! attribute filtration every node enters at 0 and an edge enters at its
//! feature-distance weight, so the finite bars are exactly the minimum
//! spanning forest weights.
//!
//! Diagrams are computed by a union-find sweep over the sorted entry values.
//! Simultaneous entries are processed as one threshold step (nodes before
//! edges); on a merge the component with the smaller `(birth, node id)`
//! survives. Zero-length bars are not recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{k_hop_neighborhood, EdgeWeighting, Graph, Metric, Neighborhood};

/// Which degree a node carries in the degree filtration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeScope {
    /// Degree in the full graph.
    #[default]
    Global,
    /// Degree inside the neighborhood subgraph.
    Local,
}

/// Sublevel filtration applied to every neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Filtration {
    Degree {
        #[serde(default)]
        scope: DegreeScope,
    },
    Attribute {
        metric: Metric,
    },
}

impl Filtration {
    pub fn degree() -> Self {
        Filtration::Degree {
            scope: DegreeScope::Global,
        }
    }

    pub fn attribute(metric: Metric) -> Self {
        Filtration::Attribute { metric }
    }

    /// Edge weighting the neighborhoods must be built with.
    pub fn weighting(self) -> EdgeWeighting {
        match self {
            Filtration::Degree { .. } => EdgeWeighting::Unweighted,
            Filtration::Attribute { metric } => EdgeWeighting::Attribute(metric),
        }
    }
}

/// Multiset of `(birth, death)` pairs plus essential (never dying) births.
///
/// Pairs and essential births are kept sorted so that equality is multiset
/// equality.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub dim: usize,
    pub pairs: Vec<(f64, f64)>,
    pub essential: Vec<f64>,
}

impl PersistenceDiagram {
    pub fn new(dim: usize, mut pairs: Vec<(f64, f64)>, mut essential: Vec<f64>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        essential.sort_by(f64::total_cmp);
        PersistenceDiagram {
            dim,
            pairs,
            essential,
        }
    }

    /// Number of finite points plus essential classes.
    pub fn len(&self) -> usize {
        self.pairs.len() + self.essential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest finite death value, if any.
    pub fn max_death(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.1).max_by(f64::total_cmp)
    }
}

struct ElderForest {
    parent: Vec<usize>,
    // (birth, oldest node id) of each root
    key: Vec<(f64, usize)>,
}

impl ElderForest {
    fn new(n: usize) -> Self {
        ElderForest {
            parent: (0..n).collect(),
            key: vec![(0.0, 0); n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Merges the components of `a` and `b`; returns the birth of the
    /// component that dies, or `None` if they were already joined.
    fn merge(&mut self, a: usize, b: usize) -> Option<f64> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let (ka, kb) = (self.key[ra], self.key[rb]);
        let older_a = ka.0 < kb.0 || (ka.0 == kb.0 && ka.1 < kb.1);
        let (survivor, dying) = if older_a { (ra, rb) } else { (rb, ra) };
        self.parent[dying] = survivor;
        Some(self.key[dying].0)
    }
}

/// 0-dimensional persistence of a graph filtered by vertex and edge entry
/// values. Every edge value must be at least the values of its endpoints.
pub fn sublevel_persistence(
    vertex_values: &[f64],
    edges: &[(usize, usize, f64)],
) -> Result<PersistenceDiagram> {
    let n = vertex_values.len();
    for &(i, j, w) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidNode {
                node: i.max(j),
                n_nodes: n,
            });
        }
        if w < vertex_values[i] || w < vertex_values[j] || w.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "edge ({i}, {j}) enters at {w} before one of its endpoints"
            )));
        }
    }
    let mut node_order: Vec<usize> = (0..n).collect();
    node_order.sort_by(|&a, &b| vertex_values[a].total_cmp(&vertex_values[b]).then(a.cmp(&b)));
    let mut edge_order: Vec<usize> = (0..edges.len()).collect();
    edge_order.sort_by(|&a, &b| edges[a].2.total_cmp(&edges[b].2).then(a.cmp(&b)));

    let mut forest = ElderForest::new(n);
    let mut pairs = Vec::new();
    let (mut ni, mut ei) = (0, 0);
    while ni < n || ei < edges.len() {
        let next_node = node_order.get(ni).map(|&v| vertex_values[v]);
        let next_edge = edge_order.get(ei).map(|&e| edges[e].2);
        let t = match (next_node, next_edge) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!(),
        };
        while ni < n && vertex_values[node_order[ni]] == t {
            let v = node_order[ni];
            forest.key[v] = (t, v);
            ni += 1;
        }
        while ei < edges.len() && edges[edge_order[ei]].2 == t {
            let (a, b, _) = edges[edge_order[ei]];
            if let Some(birth) = forest.merge(a, b) {
                if t > birth {
                    pairs.push((birth, t));
                }
            }
            ei += 1;
        }
    }
    let roots: Vec<usize> = (0..n).filter(|&v| forest.find(v) == v).collect();
    let essential = roots.into_iter().map(|v| forest.key[v].0).collect();
    Ok(PersistenceDiagram::new(0, pairs, essential))
}

/// Degree-filtration diagram of a neighborhood. `global_degrees` is indexed
/// over the whole graph.
pub fn degree_filtration_pd(
    nbhd: &Neighborhood,
    global_degrees: &[usize],
) -> Result<PersistenceDiagram> {
    if nbhd.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let values: Vec<f64> = nbhd
        .members()
        .iter()
        .map(|&v| {
            global_degrees
                .get(v)
                .map(|&d| d as f64)
                .ok_or(Error::InvalidNode {
                    node: v,
                    n_nodes: global_degrees.len(),
                })
        })
        .collect::<Result<_>>()?;
    degree_pd_from_values(nbhd, &values)
}

fn local_degree_pd(nbhd: &Neighborhood) -> Result<PersistenceDiagram> {
    if nbhd.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let mut deg = vec![0.0; nbhd.len()];
    for &(i, j) in nbhd.local_edges() {
        deg[i] += 1.0;
        deg[j] += 1.0;
    }
    degree_pd_from_values(nbhd, &deg)
}

fn degree_pd_from_values(nbhd: &Neighborhood, values: &[f64]) -> Result<PersistenceDiagram> {
    let edges: Vec<_> = nbhd
        .local_edges()
        .iter()
        .map(|&(i, j)| (i, j, values[i].max(values[j])))
        .collect();
    sublevel_persistence(values, &edges)
}

/// Attribute-filtration diagram: nodes at 0, edges at their weight.
pub fn attribute_filtration_pd(nbhd: &Neighborhood) -> Result<PersistenceDiagram> {
    if nbhd.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let weights = nbhd
        .weights()
        .ok_or(Error::UnweightedNeighborhood(nbhd.center()))?;
    let edges: Vec<_> = nbhd
        .local_edges()
        .iter()
        .zip(weights)
        .map(|(&(i, j), &w)| (i, j, w))
        .collect();
    sublevel_persistence(&vec![0.0; nbhd.len()], &edges)
}

/// Diagram of one neighborhood under `filtration`.
pub fn neighborhood_diagram(
    nbhd: &Neighborhood,
    filtration: Filtration,
    global_degrees: &[usize],
) -> Result<PersistenceDiagram> {
    match filtration {
        Filtration::Degree {
            scope: DegreeScope::Global,
        } => degree_filtration_pd(nbhd, global_degrees),
        Filtration::Degree {
            scope: DegreeScope::Local,
        } => local_degree_pd(nbhd),
        Filtration::Attribute { .. } => attribute_filtration_pd(nbhd),
    }
}

/// Diagram of every node's k-hop neighborhood, in node order.
pub fn node_diagrams(g: &Graph, filtration: Filtration, k: usize) -> Result<Vec<PersistenceDiagram>> {
    let degrees = g.degree_vector();
    (0..g.n_nodes())
        .into_par_iter()
        .map(|u| {
            let nbhd = k_hop_neighborhood(g, u, k, filtration.weighting())?;
            neighborhood_diagram(&nbhd, filtration, &degrees)
        })
        .collect()
}
