mod common;

use std::collections::{BTreeSet, HashSet};

use common::*;
use gcncluster::data::EmbeddingSet;
use gcncluster::graph::{build_knn_graph, AffinityGraph};
use gcncluster::proposals::{centroid_graph, generate_proposals, super_vertices, ProposalConfig};
use proptest::prelude::*;
use rand::Rng;

fn connected_in(g: &AffinityGraph, vertices: &[usize]) -> bool {
    let edges = g.edges();
    components_at(g.n(), vertices, &edges, f64::NEG_INFINITY).len() == 1
}

/// Two speakers along e1 and e2, each made of two tight sub-blobs whose
/// centres have cosine about 0.835.
fn split_speakers() -> (EmbeddingSet, Vec<usize>) {
    let mut r = rng(21);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (speaker, (axis, offset)) in [(0usize, 2usize), (1, 3)].into_iter().enumerate() {
        for sign in [1.0, -1.0] {
            for _ in 0..5 {
                let mut v = vec![0.0; 8];
                v[axis] = 1.0;
                v[offset] = 0.3 * sign;
                for x in v.iter_mut() {
                    *x += r.random_range(-0.01..0.01);
                }
                rows.push(v);
                truth.push(speaker);
            }
        }
    }
    (EmbeddingSet::from_rows(&rows).unwrap().l2_normalize().unwrap(), truth)
}

#[test]
fn level_two_recovers_a_split_speaker() {
    let (e, truth) = split_speakers();
    let g = build_knn_graph(&e, 6).unwrap();
    let cfg = ProposalConfig {
        tau0: 0.5,
        step: 0.05,
        s_max: 5,
        levels: 2,
        k: 3,
        extra_tau0: vec![],
    };
    let proposals = generate_proposals(&g, &e, &cfg).unwrap();
    let level1: Vec<&Vec<usize>> = proposals.iter().filter(|p| p.level == 1).map(|p| &p.vertices).collect();
    assert!(level1.iter().all(|v| v.len() <= 5));
    for speaker in 0..2 {
        let full: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == speaker).collect();
        assert!(
            proposals.iter().any(|p| p.level == 2 && p.vertices == full),
            "speaker {speaker} not proposed at level 2"
        );
    }
}

#[test]
fn one_level_equals_the_super_vertices() {
    let e = random_unit_embeddings(40, 4, 8);
    let g = build_knn_graph(&e, 4).unwrap();
    let cfg = ProposalConfig {
        levels: 1,
        ..ProposalConfig::default()
    };
    let got: Vec<Vec<usize>> = generate_proposals(&g, &e, &cfg).unwrap().into_iter().map(|p| p.vertices).collect();
    let sv = super_vertices(&g, cfg.tau0, cfg.step, cfg.s_max).unwrap();
    assert_eq!(got, sv.groups().to_vec());
}

#[test]
fn centroid_cosines_match_hand_values() {
    let e = EmbeddingSet::from_rows(&[
        vec![1.0, 0.1],
        vec![1.0, -0.1],
        vec![0.9, 0.0],
        vec![-1.0, 0.2],
        vec![-1.0, 0.0],
        vec![-0.8, 0.3],
    ])
    .unwrap()
    .l2_normalize()
    .unwrap();
    let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
    let (centroids, g) = centroid_graph(&e, &groups, 5).unwrap();
    let mean = |members: &[usize]| {
        let mut m = [0.0; 2];
        for &i in members {
            m[0] += e.data()[[i, 0]] / 3.0;
            m[1] += e.data()[[i, 1]] / 3.0;
        }
        let norm = (m[0] * m[0] + m[1] * m[1]).sqrt();
        [m[0] / norm, m[1] / norm]
    };
    let (a, b) = (mean(&groups[0]), mean(&groups[1]));
    for c in 0..2 {
        assert!((centroids.data()[[0, c]] - a[c]).abs() < 1e-12);
        assert!((centroids.data()[[1, c]] - b[c]).abs() < 1e-12);
    }
    assert!((g.weight(0, 1).unwrap() - (a[0] * b[0] + a[1] * b[1])).abs() < 1e-6);
    // k is clamped to groups - 1
    assert_eq!(g.edge_count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn super_vertices_match_union_find(n in 1usize..120, m in 0usize..400, tau0 in 0.0f64..0.95,
                                       step in 0.01f64..0.3, s_max in 1usize..40, seed in 0u64..10_000) {
        let (g, edges) = random_graph(n, m, -0.2, 1.0, seed);
        let got = super_vertices(&g, tau0, step, s_max).unwrap();
        let want = super_vertex_oracle(n, &edges, tau0, step, s_max);
        let pairs: Vec<(Vec<usize>, f64)> = got.groups().iter().cloned().zip(got.thresholds().iter().copied()).collect();
        prop_assert_eq!(&pairs, &want);
        // each group is connected at its own threshold and respects the cap
        for (group, &tau) in got.groups().iter().zip(got.thresholds()) {
            prop_assert!(group.len() <= s_max);
            if tau < 1.0 {
                prop_assert_eq!(components_at(n, group, &edges, tau).len(), 1);
            }
        }
    }

    #[test]
    fn raising_the_threshold_only_refines(n in 2usize..80, m in 0usize..300, lo in 0.0f64..0.9, gap in 0.0f64..0.5,
                                          seed in 0u64..10_000) {
        let (g, _) = random_graph(n, m, 0.0, 1.0, seed);
        let hi = (lo + gap).min(0.99);
        let coarse = super_vertices(&g, lo, 0.1, n).unwrap();
        let fine = super_vertices(&g, hi, 0.1, n).unwrap();
        let mut owner = vec![0; n];
        for (c, group) in coarse.groups().iter().enumerate() {
            for &v in group {
                owner[v] = c;
            }
        }
        for group in fine.groups() {
            prop_assert!(group.iter().all(|&v| owner[v] == owner[group[0]]));
        }
    }

    #[test]
    fn proposals_are_connected_unique_and_cover(n in 3usize..80, k in 1usize..6, levels in 1usize..4,
                                                 s_max in 2usize..30, seed in 0u64..10_000) {
        let e = random_unit_embeddings(n, 3, seed);
        let g = build_knn_graph(&e, k.min(n - 1)).unwrap();
        let cfg = ProposalConfig { tau0: 0.3, step: 0.1, s_max, levels, k: 3, extra_tau0: vec![0.6] };
        let proposals = generate_proposals(&g, &e, &cfg).unwrap();
        let mut seen = HashSet::new();
        let mut covered = BTreeSet::new();
        for p in &proposals {
            prop_assert!(!p.vertices.is_empty());
            prop_assert!(p.vertices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(seen.insert(p.vertices.clone()), "duplicate proposal");
            prop_assert!(connected_in(&g, &p.vertices));
            covered.extend(p.vertices.iter().copied());
        }
        prop_assert_eq!(covered.len(), n);
        prop_assert!(proposals.iter().any(|p| p.level == 1));
    }
}
