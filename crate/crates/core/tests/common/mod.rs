//! Independent reference implementations and random instance generators
//! shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topo_rewire::graph::Graph;
use topo_rewire::PersistenceDiagram;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with `n` nodes, edge probability `p` and uniform
/// features in `[0, 1)`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, n_features: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let features = DMatrix::from_fn(n, n_features, |_, _| rng.random::<f64>());
    Graph::new(n, edges, features).unwrap()
}

/// Uniform random graph with exactly `m` edges.
pub fn random_graph_with_edges(rng: &mut impl Rng, n: usize, m: usize) -> Graph {
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
    for i in 0..m {
        let j = rng.random_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(m);
    Graph::structure_only(n, all).unwrap()
}

/// Components of the subgraph on `alive` nodes using the given edges, as a
/// label per node (`usize::MAX` for absent nodes). Plain depth-first search.
fn component_labels(n: usize, alive: &[bool], edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !alive[s] || label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if label[y] == usize::MAX {
                    label[y] = next;
                    stack.push(y);
                }
            }
        }
        next += 1;
    }
    label
}

/// 0-dimensional diagram of a sublevel filtration via persistent Betti
/// numbers: `beta[i][j]` counts components of the complex at threshold `j`
/// that contain a vertex present at threshold `i`, and pair multiplicities
/// follow by inclusion-exclusion.
pub fn brute_force_diagram(vertex_values: &[f64], edges: &[(usize, usize, f64)]) -> PersistenceDiagram {
    let n = vertex_values.len();
    let mut ts: Vec<f64> = vertex_values.iter().copied().chain(edges.iter().map(|e| e.2)).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let steps = ts.len();
    let alive_at = |j: usize| -> Vec<bool> { vertex_values.iter().map(|&f| f <= ts[j]).collect() };
    let edges_at = |j: usize| -> Vec<(usize, usize)> {
        edges.iter().filter(|e| e.2 <= ts[j]).map(|e| (e.0, e.1)).collect()
    };
    // beta[i][j] with index 0 standing for the empty complex
    let mut beta = vec![vec![0i64; steps + 1]; steps + 1];
    for j in 1..=steps {
        let labels = component_labels(n, &alive_at(j - 1), &edges_at(j - 1));
        for i in 1..=j {
            let early = alive_at(i - 1);
            let mut hit: Vec<usize> = (0..n).filter(|&v| early[v]).map(|v| labels[v]).collect();
            hit.sort_unstable();
            hit.dedup();
            beta[i][j] = hit.len() as i64;
        }
    }
    let mut pairs = Vec::new();
    let mut essential = Vec::new();
    for i in 1..=steps {
        for j in (i + 1)..=steps {
            let mult = beta[i][j - 1] - beta[i - 1][j - 1] - beta[i][j] + beta[i - 1][j];
            assert!(mult >= 0, "negative multiplicity");
            for _ in 0..mult {
                pairs.push((ts[i - 1], ts[j - 1]));
            }
        }
        let ess = beta[i][steps] - beta[i - 1][steps];
        for _ in 0..ess {
            essential.push(ts[i - 1]);
        }
    }
    PersistenceDiagram::new(0, pairs, essential)
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Minimum over all partial injections of `a` into `b` (unmatched points go
/// to the diagonal), which covers every bijection of the augmented diagrams.
fn finite_brute(a: &[(f64, f64)], b: &[(f64, f64)], p: f64) -> f64 {
    fn go(i: usize, a: &[(f64, f64)], b: &[(f64, f64)], used: &mut Vec<bool>, p: f64) -> f64 {
        if i == a.len() {
            return b
                .iter()
                .zip(used.iter())
                .filter(|(_, &u)| !u)
                .map(|(x, _)| ((x.1 - x.0) / 2.0).powf(p))
                .sum();
        }
        let mut best = ((a[i].1 - a[i].0) / 2.0).powf(p) + go(i + 1, a, b, used, p);
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(linf(a[i], b[j]).powf(p) + go(i + 1, a, b, used, p));
                used[j] = false;
            }
        }
        best
    }
    go(0, a, b, &mut vec![false; b.len()], p)
}

/// Minimum over injections of the smaller essential multiset into the
/// larger; every unmatched class pays `penalty^p`.
fn essential_brute(a: &[f64], b: &[f64], p: f64, penalty: f64) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    fn go(i: usize, s: &[f64], l: &[f64], used: &mut Vec<bool>, p: f64) -> f64 {
        if i == s.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..l.len() {
            if !used[j] {
                used[j] = true;
                best = best.min((s[i] - l[j]).abs().powf(p) + go(i + 1, s, l, used, p));
                used[j] = false;
            }
        }
        best
    }
    go(0, small, large, &mut vec![false; large.len()], p)
        + (large.len() - small.len()) as f64 * penalty.powf(p)
}

/// Exhaustive p-Wasserstein distance with the library's essential-class
/// convention (default penalty: half the largest finite death).
pub fn brute_force_wasserstein(
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
    p: f64,
    penalty: Option<f64>,
) -> f64 {
    let max_death = d1.pairs.iter().chain(&d2.pairs).map(|x| x.1).fold(0.0, f64::max);
    let penalty = penalty.unwrap_or(max_death / 2.0);
    let total = finite_brute(&d1.pairs, &d2.pairs, p) + essential_brute(&d1.essential, &d2.essential, p, penalty);
    total.powf(1.0 / p)
}

/// Random diagram with up to `max_points` finite pairs on a coarse grid
/// (to provoke ties) and the given number of essential classes.
pub fn random_diagram(rng: &mut impl Rng, max_points: usize, n_essential: usize) -> PersistenceDiagram {
    let n = rng.random_range(0..=max_points);
    let pairs = (0..n)
        .map(|_| {
            let b = rng.random_range(0..8) as f64 * 0.5;
            let d = b + rng.random_range(1..8) as f64 * 0.5;
            (b, d)
        })
        .collect();
    let essential = (0..n_essential).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
    PersistenceDiagram::new(0, pairs, essential)
}

/// Dense solve of `(I - mu L) X = mu H`, the exact resolvent product.
pub fn dense_resolvent(l: &DMatrix<f64>, h: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let n = l.nrows();
    let a = DMatrix::identity(n, n) - l * mu;
    a.lu().solve(&(h * mu)).expect("I - mu L is invertible")
}
