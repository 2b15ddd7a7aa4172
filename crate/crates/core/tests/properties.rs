//! Property tests over randomly generated graphs and diagrams.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use topo_rewire::filtration::{node_diagrams, Filtration};
use topo_rewire::graph::{k_hop_neighborhood, EdgeWeighting, Metric};
use topo_rewire::harness::attack::{random_attack, AttackConfig};
use topo_rewire::stability::algebraic_connectivity;
use topo_rewire::stan::{stan, topo_weights, StanConfig};
use topo_rewire::timr::{build_timr, quantile_thresholds, BinaryAdjacency};
use topo_rewire::trinet::laplacian_of;
use topo_rewire::wasserstein::{distance_matrix, pairwise_distance_matrix, wasserstein, wasserstein_with};
use topo_rewire::{PersistenceDiagram, TopoDistanceMatrix, WassersteinConfig};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

/// Prim's algorithm on the neighborhood's weighted edges; returns the
/// multiset of spanning-forest weights.
fn spanning_forest_weights(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut in_tree = vec![false; n];
    let mut out = Vec::new();
    for root in 0..n {
        if in_tree[root] {
            continue;
        }
        in_tree[root] = true;
        loop {
            let next = edges
                .iter()
                .filter(|e| in_tree[e.0] != in_tree[e.1])
                .min_by(|a, b| a.2.total_cmp(&b.2));
            match next {
                Some(&(a, b, w)) => {
                    in_tree[a] = true;
                    in_tree[b] = true;
                    out.push(w);
                }
                None => break,
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn attribute_deaths_are_spanning_forest_weights(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=12);
        let g = random_graph(&mut r, n, 0.3, 3);
        for u in 0..n {
            let nb = k_hop_neighborhood(&g, u, 2, EdgeWeighting::Attribute(Metric::Euclidean)).unwrap();
            let edges: Vec<_> = nb.local_edges().iter().zip(nb.weights().unwrap())
                .map(|(&(a, b), &w)| (a, b, w)).collect();
            let d = topo_rewire::filtration::attribute_filtration_pd(&nb).unwrap();
            let deaths: Vec<f64> = d.pairs.iter().map(|p| p.1).collect();
            let mut deaths = deaths;
            deaths.sort_by(f64::total_cmp);
            prop_assert_eq!(deaths, spanning_forest_weights(nb.len(), &edges));
            // neighborhoods are connected; continuous features give no zero-length bars
            prop_assert_eq!(d.essential.len(), 1);
            prop_assert_eq!(d.len(), nb.len());
        }
    }

    #[test]
    fn degree_diagrams_have_one_essential_class(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=14);
        let g = random_graph(&mut r, n, 0.2, 0);
        for d in node_diagrams(&g, Filtration::degree(), 2).unwrap() {
            prop_assert_eq!(d.essential.len(), 1);
            prop_assert!(d.pairs.iter().all(|p| p.1 > p.0));
        }
    }

    #[test]
    fn wasserstein_metric_axioms(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_diagram(&mut r, 5, 1);
        let b = random_diagram(&mut r, 5, 1);
        let c = random_diagram(&mut r, 5, 1);
        for p in [1.0, 2.0] {
            let d = |x: &PersistenceDiagram, y: &PersistenceDiagram| wasserstein(x, y, p).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        }
    }

    #[test]
    fn triangle_inequality_with_fixed_penalty(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (na, nb, nc) = (r.random_range(0..3), r.random_range(0..3), r.random_range(0..3));
        let a = random_diagram(&mut r, 4, na);
        let b = random_diagram(&mut r, 4, nb);
        let c = random_diagram(&mut r, 4, nc);
        let cfg = WassersteinConfig { p: 1.0, essential_penalty: Some(1.5) };
        let d = |x: &PersistenceDiagram, y: &PersistenceDiagram| wasserstein_with(x, y, &cfg).unwrap();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn perturbing_one_point_moves_w1_by_at_most_delta(seed in any::<u64>(), delta in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_diagram(&mut r, 5, 1);
        prop_assume!(!a.pairs.is_empty());
        let mut pairs = a.pairs.clone();
        let i = r.random_range(0..pairs.len());
        pairs[i].1 += delta;
        let b = PersistenceDiagram::new(0, pairs, a.essential.clone());
        let cfg = WassersteinConfig { p: 1.0, essential_penalty: Some(0.0) };
        prop_assert!(wasserstein_with(&a, &b, &cfg).unwrap() <= delta + 1e-12);
    }

    #[test]
    fn distance_matrix_is_symmetric_with_zero_diagonal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=10);
        let g = random_graph(&mut r, n, 0.3, 2);
        let dm = pairwise_distance_matrix(&g, Filtration::attribute(Metric::Euclidean), 1, &WassersteinConfig::default()).unwrap();
        for u in 0..n {
            prop_assert_eq!(dm.get(u, u), 0.0);
            for v in 0..n {
                prop_assert_eq!(dm.get(u, v), dm.get(v, u));
            }
        }
    }

    #[test]
    fn timr_invariants(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..=12);
        let g = random_graph(&mut r, n, 0.3, 2);
        let dm = pairwise_distance_matrix(&g, Filtration::attribute(Metric::Euclidean), 1, &WassersteinConfig::default()).unwrap();
        let e1 = r.random_range(0.0..0.5);
        let e2 = e1 + r.random_range(0.01..1.0);
        let t = build_timr(&g, &dm, e1, e2).unwrap();
        for u in 0..n {
            prop_assert!(!t.w_joint.get(u, u));
            for v in 0..n {
                prop_assert_eq!(t.w_joint.get(u, v), t.w_joint.get(v, u));
                prop_assert!(!(t.w_plus.get(u, v) && t.w_minus.get(u, v)));
                if u != v {
                    let m = t.multiedge(u, v);
                    let allowed = [(1, 1, 0), (0, 1, 0), (1, 0, -1), (0, 0, -1), (1, 0, 0), (0, 0, 0)];
                    prop_assert!(allowed.contains(&m), "{:?}", m);
                }
            }
        }
        // a smaller eps1 never adds edges, a larger eps2 never removes them
        let smaller = build_timr(&g, &dm, e1 / 2.0, e2).unwrap();
        let larger = build_timr(&g, &dm, e1, e2 * 2.0).unwrap();
        for u in 0..n {
            for v in 0..n {
                prop_assert!(!smaller.w_joint.get(u, v) || t.w_joint.get(u, v));
                prop_assert!(!t.w_joint.get(u, v) || larger.w_joint.get(u, v));
            }
        }
        prop_assert_eq!(build_timr(&g, &dm, 0.0, f64::INFINITY).unwrap().w_joint, BinaryAdjacency::from_graph(&g));
    }

    #[test]
    fn quantile_thresholds_are_ordered(seed in any::<u64>(), q1 in 0.0f64..0.5, q2 in 0.5f64..=1.0) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 8, 0.4, 2);
        let dm = pairwise_distance_matrix(&g, Filtration::attribute(Metric::Euclidean), 1, &WassersteinConfig::default()).unwrap();
        if let Ok((e1, e2)) = quantile_thresholds(&dm, q1, q2) {
            prop_assert!(e1 < e2);
            let vals = dm.upper_triangle();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(0.0, f64::max);
            prop_assert!(lo <= e1 && e2 <= hi);
        }
    }

    #[test]
    fn stan_weights_normalized_and_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..=10);
        let diagrams: Vec<_> = (0..n).map(|_| random_diagram(&mut r, 4, 1)).collect();
        let dm = distance_matrix(&diagrams, &WassersteinConfig::default()).unwrap();
        let neighbors: Vec<usize> = (1..n).collect();
        let w = topo_weights(0, &dm, &neighbors, StanConfig::default().numeric_floor).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for i in 0..w.len() {
            prop_assert!(w[i] > 0.0);
            for j in 0..w.len() {
                let (di, dj) = (dm.get(0, neighbors[i]), dm.get(0, neighbors[j]));
                if dj - di > 1e-12 * dj.max(1.0) {
                    prop_assert!(w[i] > w[j]);
                }
            }
        }
    }

    #[test]
    fn stan_with_zero_alpha_is_identity(seed in any::<u64>(), iterations in 0usize..4) {
        let mut r = rng(seed);
        let n = r.random_range(1..=10);
        let g = random_graph(&mut r, n, 0.3, 3);
        let dm = pairwise_distance_matrix(&g, Filtration::degree(), 1, &WassersteinConfig::default()).unwrap();
        let cfg = StanConfig { alpha: 0.0, iterations, ..Default::default() };
        prop_assert_eq!(&stan(&g, g.features(), &dm, &cfg).unwrap(), g.features());
        let cfg = StanConfig { alpha: 0.3, iterations, ..Default::default() };
        prop_assert_eq!(stan(&g, g.features(), &dm, &cfg).unwrap(), stan(&g, g.features(), &dm, &cfg).unwrap());
    }

    #[test]
    fn laplacian_normalizations(seed in any::<u64>(), rho in 1u32..4) {
        let mut r = rng(seed);
        let n = r.random_range(1..=9);
        let g = random_graph(&mut r, n, 0.3, 0);
        let adj = BinaryAdjacency::from_graph(&g);
        let sym = laplacian_of(&adj, 0.5, 1).unwrap();
        prop_assert_eq!(&sym.matrix, &sym.matrix.transpose());
        let rw = laplacian_of(&adj, 1.0, rho).unwrap();
        for row in rw.matrix.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn algebraic_connectivity_detects_disconnection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..=10);
        let g = random_graph(&mut r, n, 0.3, 0);
        let l2 = algebraic_connectivity(&g).unwrap();
        prop_assert!(l2 >= 0.0);
        prop_assert_eq!(l2 == 0.0, !g.is_connected());
    }

    #[test]
    fn attacks_keep_everything_but_edges(seed in any::<u64>(), ratio in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 12, 0.2, 2).with_labels((0..12).map(|u| u % 3).collect()).unwrap();
        let h = random_attack(&g, AttackConfig { ratio, seed }).unwrap();
        prop_assert_eq!(h.n_nodes(), g.n_nodes());
        prop_assert_eq!(h.features(), g.features());
        prop_assert_eq!(h.labels(), g.labels());
        prop_assert_eq!(h.masks(), g.masks());
        prop_assert_eq!(h.n_edges(), g.n_edges() + (ratio * g.n_edges() as f64).round() as usize);
        prop_assert!(g.edges().all(|(u, v)| h.has_edge(u, v)));
        prop_assert_eq!(h, random_attack(&g, AttackConfig { ratio, seed }).unwrap());
    }
}

#[test]
fn distance_matrix_from_values_validates() {
    assert!(TopoDistanceMatrix::from_values(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
}
