use super::AhcStop;
use crate::data::{EmbeddingSet, Partition};
use crate::error::{Error, Result};

/// One agglomeration step: cluster `absorbed` joins cluster `keep`, each
/// named by its smallest member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub keep: usize,
    pub absorbed: usize,
    pub distance: f64,
}

/// Full average-linkage merge sequence on cosine distance, down to one
/// cluster. Ties go to the lexicographically smallest pair.
pub fn ahc_dendrogram(e: &EmbeddingSet) -> Vec<Merge> {
    let n = e.n();
    let x = e.data();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let denom = norms[i] * norms[j];
            let cos = if denom > 0.0 { x.row(i).dot(&x.row(j)) / denom } else { 0.0 };
            dist[i][j] = 1.0 - cos;
            dist[j][i] = dist[i][j];
        }
    }
    let mut size = vec![1usize; n];
    let mut live: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while live.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (a, &i) in live.iter().enumerate() {
            for &j in &live[a + 1..] {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (d, i, j) = best;
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for &k in &live {
            if k != i && k != j {
                let merged = (si * dist[k][i] + sj * dist[k][j]) / (si + sj);
                dist[k][i] = merged;
                dist[i][k] = merged;
            }
        }
        size[i] += size[j];
        live.retain(|&k| k != j);
        merges.push(Merge {
            keep: i,
            absorbed: j,
            distance: d,
        });
    }
    merges
}

/// Replays merges until the stop rule fires.
pub fn cut_dendrogram(n: usize, merges: &[Merge], stop: AhcStop) -> Result<Partition> {
    if let AhcStop::Clusters(0) = stop {
        return Err(Error::config("AHC cluster count must be at least 1"));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    for m in merges {
        let done = match stop {
            AhcStop::Clusters(k) => clusters <= k,
            AhcStop::Distance(t) => m.distance > t,
        };
        if done {
            break;
        }
        if m.keep >= n || m.absorbed >= n {
            return Err(Error::Bounds {
                index: m.keep.max(m.absorbed),
                len: n,
            });
        }
        parent[m.absorbed] = m.keep;
        clusters -= 1;
    }
    let root = |mut v: usize| {
        while parent[v] != v {
            v = parent[v];
        }
        v
    };
    let raw: Vec<usize> = (0..n).map(root).collect();
    Ok(Partition::from_raw(&raw))
}

/// Average-linkage agglomeration on cosine distance. Also returns the
/// linkage distance of every merge performed, in order.
pub fn ahc_with_merges(e: &EmbeddingSet, stop: AhcStop) -> Result<(Partition, Vec<f64>)> {
    let merges = ahc_dendrogram(e);
    let p = cut_dendrogram(e.n(), &merges, stop)?;
    let performed = e.n() - p.n_clusters();
    Ok((p, merges[..performed].iter().map(|m| m.distance).collect()))
}

pub fn ahc(e: &EmbeddingSet, stop: AhcStop) -> Result<Partition> {
    Ok(ahc_with_merges(e, stop)?.0)
}
