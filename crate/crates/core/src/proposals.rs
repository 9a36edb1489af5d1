//! Multi-scale cluster proposals.
//!
//! Level 1 are super-vertices: connected components of the affinity graph
//! after dropping edges below a threshold, with oversize components split
//! again at a higher threshold. Each further level treats the previous
//! level's groups as vertices (their normalized centroids), builds a kNN graph
//! among them and takes super-vertices of that graph.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, Metadata};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, AffinityGraph};

#[derive(Debug, Clone)]
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
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

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// Disjoint groups covering every vertex, each with the threshold at which
/// it was cut out.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperVertexPartition {
    groups: Vec<Vec<usize>>,
    thresholds: Vec<f64>,
}

impl SuperVertexPartition {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Components of `vertices` (sorted) using only edges with `w >= tau`
/// between members. Output components are sorted and ordered by first member.
fn components(g: &AffinityGraph, vertices: &[usize], tau: f64) -> Vec<Vec<usize>> {
    let mut local = std::collections::HashMap::with_capacity(vertices.len());
    for (a, &v) in vertices.iter().enumerate() {
        local.insert(v, a);
    }
    let mut ds = DisjointSet::new(vertices.len());
    for (a, &v) in vertices.iter().enumerate() {
        for &(u, w) in g.neighbors(v) {
            if w >= tau {
                if let Some(&b) = local.get(&u) {
                    ds.union(a, b);
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut order = Vec::new();
    for (a, &v) in vertices.iter().enumerate() {
        let root = ds.find(a);
        let entry = by_root.entry(root).or_default();
        if entry.is_empty() {
            order.push(root);
        }
        entry.push(v);
    }
    order.into_iter().map(|r| by_root.remove(&r).expect("root")).collect()
}

pub fn super_vertices(
    g: &AffinityGraph,
    tau0: f64,
    step: f64,
    s_max: usize,
) -> Result<SuperVertexPartition> {
    if !(0.0..1.0).contains(&tau0) {
        return Err(Error::config(format!("tau0 must lie in [0, 1), got {tau0}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config(format!("step must be positive, got {step}")));
    }
    if s_max == 0 {
        return Err(Error::config("s_max must be at least 1"));
    }
    let mut groups = Vec::new();
    let mut thresholds = Vec::new();
    // depth-first so groups from one oversize component stay together
    let mut stack: Vec<(Vec<usize>, usize)> = vec![((0..g.n()).collect(), 0)];
    while let Some((vertices, depth)) = stack.pop() {
        let tau = tau0 + depth as f64 * step;
        if tau >= 1.0 {
            for v in vertices {
                groups.push(vec![v]);
                thresholds.push(tau);
            }
            continue;
        }
        let comps = components(g, &vertices, tau);
        for comp in comps.into_iter().rev() {
            if comp.len() <= s_max {
                groups.push(comp);
                thresholds.push(tau);
            } else {
                stack.push((comp, depth + 1));
            }
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&i| groups[i][0]);
    Ok(SuperVertexPartition {
        groups: order.iter().map(|&i| std::mem::take(&mut groups[i])).collect(),
        thresholds: order.iter().map(|&i| thresholds[i]).collect(),
    })
}

/// Normalized group centroids and a kNN graph over them with
/// `k' = min(k, groups - 1)`.
pub fn centroid_graph(
    e: &EmbeddingSet,
    groups: &[Vec<usize>],
    k: usize,
) -> Result<(EmbeddingSet, AffinityGraph)> {
    if groups.is_empty() {
        return Err(Error::config("centroid graph needs at least one group"));
    }
    let mut data = Array2::zeros((groups.len(), e.d()));
    for (c, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::config(format!("group {c} is empty")));
        }
        let mut mean = Array1::<f64>::zeros(e.d());
        for &i in members {
            if i >= e.n() {
                return Err(Error::Bounds { index: i, len: e.n() });
            }
            mean += &e.row(i);
        }
        mean /= members.len() as f64;
        let norm = mean.dot(&mean).sqrt();
        if norm < 1e-9 {
            return Err(Error::Degenerate(format!("centroid of group {c} has norm {norm:e}")));
        }
        data.row_mut(c).assign(&(mean / norm));
    }
    let centroids = EmbeddingSet::new(data)?;
    let k_eff = k.min(groups.len() - 1);
    let graph = if k_eff == 0 {
        AffinityGraph::empty(groups.len())
    } else {
        build_knn_graph(&centroids, k_eff)?
    };
    Ok((centroids, graph))
}

/// A candidate cluster: sorted global sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterProposal {
    pub vertices: Vec<usize>,
    pub level: usize,
    /// Indices of the previous level's groups merged into this one (for
    /// level 1, the super-vertex id itself).
    pub source: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub tau0: f64,
    pub step: f64,
    pub s_max: usize,
    pub levels: usize,
    /// Neighbors per vertex in the centroid graphs.
    pub k: usize,
    /// Further starting thresholds; each one yields its own hierarchy and
    /// the union of all of them is returned.
    pub extra_tau0: Vec<f64>,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            tau0: 0.5,
            step: 0.05,
            s_max: 60,
            levels: 2,
            k: 5,
            extra_tau0: Vec::new(),
        }
    }
}

/// Keeps only centroid-graph edges between groups that touch in `g`, so
/// merged groups stay connected in the sample graph.
fn restrict_to_touching(
    cg: &AffinityGraph,
    g: &AffinityGraph,
    groups: &[Vec<usize>],
) -> Result<AffinityGraph> {
    let mut owner = vec![usize::MAX; g.n()];
    for (c, members) in groups.iter().enumerate() {
        for &v in members {
            owner[v] = c;
        }
    }
    let mut touching = HashSet::new();
    for (i, j, _) in g.edges() {
        let (a, b) = (owner[i], owner[j]);
        if a != b && a != usize::MAX && b != usize::MAX {
            touching.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<_> = cg
        .edges()
        .into_iter()
        .filter(|&(a, b, _)| touching.contains(&(a, b)))
        .collect();
    AffinityGraph::from_edges(cg.n(), cg.k(), &edges)
}

pub fn generate_proposals(
    g: &AffinityGraph,
    e: &EmbeddingSet,
    cfg: &ProposalConfig,
) -> Result<Vec<ClusterProposal>> {
    if cfg.levels == 0 {
        return Err(Error::config("levels must be at least 1"));
    }
    if e.n() != g.n() {
        return Err(Error::Shape(format!(
            "graph has {} vertices but there are {} embeddings",
            g.n(),
            e.n()
        )));
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    for &tau0 in std::iter::once(&cfg.tau0).chain(&cfg.extra_tau0) {
        hierarchy(g, e, cfg, tau0, &mut seen, &mut out)?;
    }
    Ok(out)
}

fn hierarchy(
    g: &AffinityGraph,
    e: &EmbeddingSet,
    cfg: &ProposalConfig,
    tau0: f64,
    seen: &mut HashSet<Vec<usize>>,
    out: &mut Vec<ClusterProposal>,
) -> Result<()> {
    let base = super_vertices(g, tau0, cfg.step, cfg.s_max)?;
    let mut groups: Vec<Vec<usize>> = base.groups().to_vec();
    for (id, group) in groups.iter().enumerate() {
        if seen.insert(group.clone()) {
            out.push(ClusterProposal {
                vertices: group.clone(),
                level: 1,
                source: vec![id],
            });
        }
    }
    for level in 2..=cfg.levels {
        if groups.len() < 2 {
            break;
        }
        let (_, cg) = centroid_graph(e, &groups, cfg.k)?;
        let cg = restrict_to_touching(&cg, g, &groups)?;
        let sv = super_vertices(&cg, tau0, cfg.step, cfg.s_max)?;
        let next: Vec<Vec<usize>> = sv
            .groups()
            .iter()
            .map(|members| {
                let mut merged: Vec<usize> =
                    members.iter().flat_map(|&c| groups[c].iter().copied()).collect();
                merged.sort_unstable();
                merged
            })
            .collect();
        for (members, merged) in sv.groups().iter().zip(&next) {
            if seen.insert(merged.clone()) {
                out.push(ClusterProposal {
                    vertices: merged.clone(),
                    level,
                    source: members.clone(),
                });
            }
        }
        if next.len() == groups.len() {
            break;
        }
        groups = next;
    }
    Ok(())
}

/// Lines `level:id: i1 i2 ...`.
pub fn save_proposals(
    proposals: &[ClusterProposal],
    meta: &Metadata,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut text: String = meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect();
    for (id, p) in proposals.iter().enumerate() {
        let ids: Vec<String> = p.vertices.iter().map(usize::to_string).collect();
        text.push_str(&format!("{}:{id}: {}\n", p.level, ids.join(" ")));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<Vec<ClusterProposal>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: message.to_string(),
        };
        let mut parts = line.splitn(3, ':');
        let (Some(level), Some(_id), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `level:id: indices`"));
        };
        let level: usize = level.trim().parse().map_err(|_| err("bad level"))?;
        let mut vertices = rest
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err("bad sample index"))?;
        if vertices.is_empty() {
            return Err(err("empty proposal"));
        }
        vertices.sort_unstable();
        out.push(ClusterProposal {
            vertices,
            level,
            source: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> AffinityGraph {
        AffinityGraph::from_edges(4, 1, &[(0, 1, 0.9), (1, 2, 0.6), (2, 3, 0.2)]).unwrap()
    }

    #[test]
    fn chain_threshold_split() {
        let sv = super_vertices(&chain(), 0.5, 0.1, usize::MAX).unwrap();
        assert_eq!(sv.groups(), &[vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn high_threshold_gives_singletons() {
        let sv = super_vertices(&chain(), 0.95, 0.01, usize::MAX).unwrap();
        assert_eq!(sv.len(), 4);
    }

    #[test]
    fn size_cap_forces_escalation_to_singletons() {
        let edges: Vec<_> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j, 1.0)))
            .collect();
        let g = AffinityGraph::from_edges(4, 3, &edges).unwrap();
        let sv = super_vertices(&g, 0.5, 0.2, 1).unwrap();
        assert_eq!(sv.groups(), &[vec![0], vec![1], vec![2], vec![3]]);
        assert!(sv.thresholds().iter().all(|&t| t >= 1.0));
    }

    #[test]
    fn escalation_splits_only_the_oversize_component() {
        let sv = super_vertices(&chain(), 0.5, 0.2, 2).unwrap();
        // {0,1,2} is too big at 0.5; at 0.7 only the 0.9 edge survives
        assert_eq!(sv.groups(), &[vec![0, 1], vec![2], vec![3]]);
        assert!((sv.thresholds()[0] - 0.7).abs() < 1e-12);
        assert_eq!(sv.thresholds()[2], 0.5);
    }

    #[test]
    fn invalid_config() {
        assert!(super_vertices(&chain(), 1.0, 0.1, 3).is_err());
        assert!(super_vertices(&chain(), 0.5, 0.0, 3).is_err());
        assert!(super_vertices(&chain(), 0.5, 0.1, 0).is_err());
    }

    #[test]
    fn singleton_centroids_are_the_vectors() {
        let e = EmbeddingSet::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (c, g) = centroid_graph(&e, &[vec![0], vec![1], vec![2]], 5).unwrap();
        assert_eq!(c, e);
        assert_eq!(g.k(), 2);
        let (dup, _) = centroid_graph(&e, &[vec![0, 0]], 1).unwrap();
        assert_eq!(dup.row(0), e.row(0));
    }

    #[test]
    fn antipodal_group_mean_is_degenerate() {
        let e = EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert!(matches!(centroid_graph(&e, &[vec![0, 1]], 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn one_level_is_the_super_vertices() {
        let e = EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 1.0]])
            .unwrap()
            .l2_normalize()
            .unwrap();
        let g = chain();
        let cfg = ProposalConfig {
            levels: 1,
            ..ProposalConfig::default()
        };
        let props = generate_proposals(&g, &e, &cfg).unwrap();
        let sv = super_vertices(&g, cfg.tau0, cfg.step, cfg.s_max).unwrap();
        let sets: Vec<_> = props.iter().map(|p| p.vertices.clone()).collect();
        assert_eq!(sets, sv.groups());
    }

    #[test]
    fn proposal_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        let props = vec![
            ClusterProposal { vertices: vec![0, 3], level: 1, source: vec![] },
            ClusterProposal { vertices: vec![0, 1, 3], level: 2, source: vec![] },
        ];
        save_proposals(&props, &vec![("seed".into(), "1".into())], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1:0: 0 3\n2:1: 0 1 3\n"));
        assert_eq!(load_proposals(&path).unwrap(), props);
    }
}
