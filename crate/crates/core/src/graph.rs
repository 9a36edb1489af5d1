//! Cosine kNN affinity graphs and the normalized adjacency operators consumed
//! by the GCN layers.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::{format_sig, EmbeddingSet, Metadata};
use crate::error::{Error, Result};

/// Weighted undirected graph. Adjacency lists are sorted by neighbor index
/// and hold both directions of every edge; self-edges are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    k: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl AffinityGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            k: 0,
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected edges. Duplicate edges keep the last
    /// weight; `(i, j)` and `(j, i)` are the same edge.
    pub fn from_edges(n: usize, k: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for &(i, j, w) in edges {
            for v in [i, j] {
                if v >= n {
                    return Err(Error::Bounds { index: v, len: n });
                }
            }
            if i == j {
                return Err(Error::config(format!("self-edge at vertex {i}")));
            }
            if !w.is_finite() {
                return Err(Error::Numerical(format!("non-finite weight on edge ({i}, {j})")));
            }
            map.insert((i.min(j), i.max(j)), w);
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &w) in &map {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { n, k, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(v, _)| v)
            .ok()
            .map(|p| self.adjacency[i][p].1)
    }

    /// Dense weight matrix with negative weights clamped to zero.
    pub fn dense_nonnegative(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n, self.n));
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, wij) in list {
                w[[i, j]] = wij.max(0.0);
            }
        }
        w
    }

    /// Induced subgraph on `vertices`; local vertex `a` is `vertices[a]`.
    pub fn subgraph(&self, vertices: &[usize]) -> Result<Subgraph> {
        if vertices.is_empty() {
            return Err(Error::config("subgraph needs at least one vertex"));
        }
        let mut local = vec![usize::MAX; self.n];
        for (a, &v) in vertices.iter().enumerate() {
            if v >= self.n {
                return Err(Error::Bounds { index: v, len: self.n });
            }
            if local[v] != usize::MAX {
                return Err(Error::config(format!("vertex {v} listed twice")));
            }
            local[v] = a;
        }
        let adjacency = vertices
            .iter()
            .map(|&v| {
                let mut list: Vec<(usize, f64)> = self.adjacency[v]
                    .iter()
                    .filter(|&&(u, _)| local[u] != usize::MAX)
                    .map(|&(u, w)| (local[u], w))
                    .collect();
                list.sort_by_key(|&(u, _)| u);
                list
            })
            .collect();
        Ok(Subgraph {
            graph: AffinityGraph {
                n: vertices.len(),
                k: self.k,
                adjacency,
            },
            global: vertices.to_vec(),
        })
    }

    pub fn sym_normalize(&self) -> Result<NormalizedAdjacency> {
        self.normalize(NormKind::Symmetric)
    }

    pub fn row_normalize(&self) -> Result<NormalizedAdjacency> {
        self.normalize(NormKind::Row)
    }

    fn normalize(&self, kind: NormKind) -> Result<NormalizedAdjacency> {
        // W + I with negative weights clamped, and its degrees
        let degree: Vec<f64> = self
            .adjacency
            .iter()
            .map(|list| 1.0 + list.iter().map(|&(_, w)| w.max(0.0)).sum::<f64>())
            .collect();
        if let Some(i) = degree.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Numerical(format!(
                "degree of vertex {i} is {} after adding the self-loop",
                degree[i]
            )));
        }
        let rows = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(i, list)| {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(list.len() + 1);
                let scale = |j: usize, w: f64| match kind {
                    NormKind::Symmetric => w / (degree[i].sqrt() * degree[j].sqrt()),
                    NormKind::Row => w / degree[i],
                };
                let mut placed_diag = false;
                for &(j, w) in list {
                    if !placed_diag && j > i {
                        row.push((i, scale(i, 1.0)));
                        placed_diag = true;
                    }
                    row.push((j, scale(j, w.max(0.0))));
                }
                if !placed_diag {
                    row.push((i, scale(i, 1.0)));
                }
                row
            })
            .collect();
        Ok(NormalizedAdjacency {
            n: self.n,
            kind,
            rows,
        })
    }

    pub fn save(&self, meta: &Metadata, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = format!("# n={}\n# k={}\n", self.n, self.k);
        for (key, v) in meta {
            text.push_str(&format!("# {key}={v}\n"));
        }
        for (i, j, w) in self.edges() {
            text.push_str(&format!("{i} {j} {}\n", format_sig(w, 9)));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut n = None;
        let mut k = 0;
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let ln = idx + 1;
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("n=") {
                    n = Some(v.parse().map_err(|_| parse_err(ln, "bad n".into()))?);
                } else if let Some(v) = rest.strip_prefix("k=") {
                    k = v.parse().map_err(|_| parse_err(ln, "bad k".into()))?;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [i, j, w] = f[..] else {
                return Err(parse_err(ln, "expected `i j w`".into()));
            };
            let i: usize = i.parse().map_err(|_| parse_err(ln, "bad vertex".into()))?;
            let j: usize = j.parse().map_err(|_| parse_err(ln, "bad vertex".into()))?;
            let w: f64 = w.parse().map_err(|_| parse_err(ln, "bad weight".into()))?;
            if i >= j {
                return Err(parse_err(ln, "edges must be written with i < j".into()));
            }
            edges.push((i, j, w));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(0));
        AffinityGraph::from_edges(n, k, &edges)
    }
}

/// An induced subgraph together with the map back to parent vertex ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub graph: AffinityGraph,
    pub global: Vec<usize>,
}

/// Cosine kNN graph over unit-norm rows, symmetrized by edge union.
/// Ties in similarity go to the lower index.
pub fn build_knn_graph(e: &EmbeddingSet, k: usize) -> Result<AffinityGraph> {
    let n = e.n();
    if k == 0 || k >= n {
        return Err(Error::config(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    if !e.is_normalized(1e-6) {
        return Err(Error::config("kNN graph expects l2-normalized embeddings"));
    }
    let x = e.data();
    let selected: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| top_k(x.view(), i, k))
        .collect();
    let mut edges = Vec::with_capacity(n * k);
    for (i, nbrs) in selected.iter().enumerate() {
        for &j in nbrs {
            let (a, b) = (i.min(j), i.max(j));
            edges.push((a, b, x.row(a).dot(&x.row(b))));
        }
    }
    AffinityGraph::from_edges(n, k, &edges)
}

/// Block-diagonal kNN graph: one kNN graph per group of samples (e.g. per
/// meeting), with `k` clamped to each group's size. Singleton groups get no
/// edges.
pub fn build_block_knn_graph(e: &EmbeddingSet, groups: &[Vec<usize>], k: usize) -> Result<AffinityGraph> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let parts: Vec<Vec<(usize, usize, f64)>> = groups
        .par_iter()
        .map(|members| {
            if members.len() < 2 {
                return Ok(Vec::new());
            }
            let local = build_knn_graph(&e.select(members)?, k.min(members.len() - 1))?;
            Ok(local
                .edges()
                .into_iter()
                .map(|(i, j, w)| {
                    let (a, b) = (members[i], members[j]);
                    (a.min(b), a.max(b), w)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    AffinityGraph::from_edges(e.n(), k, &parts.concat())
}

fn top_k(x: ArrayView2<'_, f64>, i: usize, k: usize) -> Vec<usize> {
    let row = x.row(i);
    let mut sims: Vec<(f64, usize)> = x
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, other)| {
            let (a, b) = if i < j { (row, other) } else { (other, row) };
            (a.dot(&b), j)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, cmp);
        sims.truncate(k);
    }
    sims.sort_by(cmp);
    sims.into_iter().map(|(_, j)| j).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `D^-1/2 (W + I) D^-1/2`
    Symmetric,
    /// `D^-1 (W + I)`
    Row,
}

/// Sparse normalized adjacency, stored row-wise with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    kind: NormKind,
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedAdjacency {
    pub fn identity(n: usize, kind: NormKind) -> Self {
        Self {
            n,
            kind,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    /// Wraps an arbitrary dense operator (mostly useful in tests).
    pub fn from_dense(m: &Array2<f64>, kind: NormKind) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::Shape(format!("adjacency must be square, got {r}x{c}")));
        }
        let rows = m
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Ok(Self { n: r, kind, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// `A * h`
    pub fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        assert_eq!(h.nrows(), self.n, "adjacency/feature row mismatch");
        let mut out = Array2::zeros((self.n, h.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, v) in row {
                o.scaled_add(v, &h.row(j));
            }
        }
        out
    }

    /// `A^T * h`
    pub fn apply_transpose(&self, h: &Array2<f64>) -> Array2<f64> {
        assert_eq!(h.nrows(), self.n, "adjacency/feature row mismatch");
        let mut out = Array2::zeros((self.n, h.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let hi = h.row(i);
            for &(j, v) in row {
                out.row_mut(j).scaled_add(v, &hi);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit(rows: &[Vec<f64>]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows).unwrap().l2_normalize().unwrap()
    }

    #[test]
    fn mixed_vector_is_nearest_to_both_axes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = unit(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]]);
        let g = build_knn_graph(&e, 1).unwrap();
        assert!((g.weight(0, 2).unwrap() - h).abs() < 1e-12);
        assert!((g.weight(1, 2).unwrap() - h).abs() < 1e-12);
        assert_eq!(g.weight(0, 1), None);
    }

    #[test]
    fn k_equal_n_minus_one_is_complete() {
        let e = unit(&[vec![1.0, 0.2], vec![0.3, 1.0], vec![-1.0, 0.5], vec![0.1, -1.0]]);
        let g = build_knn_graph(&e, 3).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!((0..4).all(|i| g.weight(i, i).is_none()));
    }

    #[test]
    fn duplicates_connect_with_unit_weight() {
        let e = unit(&[vec![0.6, 0.8], vec![0.6, 0.8], vec![-1.0, 0.0]]);
        let g = build_knn_graph(&e, 1).unwrap();
        assert!((g.weight(0, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k_too_large() {
        let e = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(build_knn_graph(&e, 2), Err(Error::Config(_))));
    }

    #[test]
    fn two_vertex_normalizations() {
        let g = AffinityGraph::from_edges(2, 1, &[(0, 1, 1.0)]).unwrap();
        let expected = array![[0.5, 0.5], [0.5, 0.5]];
        for a in [g.sym_normalize().unwrap(), g.row_normalize().unwrap()] {
            let diff = (&a.to_dense() - &expected).mapv(f64::abs);
            assert!(diff.iter().all(|&d| d < 1e-15));
        }
    }

    #[test]
    fn edgeless_graph_normalizes_to_identity() {
        let g = AffinityGraph::empty(3);
        assert_eq!(g.sym_normalize().unwrap().to_dense(), Array2::<f64>::eye(3));
        assert_eq!(g.row_normalize().unwrap().to_dense(), Array2::<f64>::eye(3));
    }

    #[test]
    fn negative_weights_are_clamped() {
        let g = AffinityGraph::from_edges(2, 1, &[(0, 1, -0.4)]).unwrap();
        assert_eq!(g.row_normalize().unwrap().to_dense(), Array2::<f64>::eye(2));
    }

    #[test]
    fn induced_subgraph_of_path() {
        let g = AffinityGraph::from_edges(3, 1, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let s = g.subgraph(&[0, 2]).unwrap();
        assert_eq!(s.graph.n(), 2);
        assert_eq!(s.graph.edge_count(), 0);
        assert_eq!(s.global, vec![0, 2]);
        let single = g.subgraph(&[1]).unwrap();
        assert_eq!((single.graph.n(), single.graph.edge_count()), (1, 0));
        assert_eq!(g.subgraph(&[0, 1, 2]).unwrap().graph, g);
        assert!(matches!(g.subgraph(&[5]), Err(Error::Bounds { .. })));
    }

    #[test]
    fn transpose_apply_matches_dense() {
        let g = AffinityGraph::from_edges(3, 1, &[(0, 1, 0.9), (1, 2, 0.3)]).unwrap();
        let a = g.row_normalize().unwrap();
        let h = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let dense = a.to_dense();
        let expect = dense.t().dot(&h);
        let got = a.apply_transpose(&h);
        assert!((&got - &expect).iter().all(|d| d.abs() < 1e-14));
        assert!((&a.apply(&h) - &dense.dot(&h)).iter().all(|d| d.abs() < 1e-14));
    }
}
