use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{EmbeddingSet, Partition};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub partition: Partition,
    pub centroids: Array2<f64>,
    /// Sum of squared distances after each Lloyd iteration.
    pub objective: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn seed_centers(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            while nearest[chosen] == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

fn assign(x: &Array2<f64>, centers: &Array2<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.nrows() {
                let d = sq_dist(x.row(i), centers.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

fn objective(x: &Array2<f64>, centers: &Array2<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(x.row(i), centers.row(c)))
        .sum()
}

/// Refills empty clusters with the point farthest from its centroid in the
/// currently largest cluster.
fn repair_empty(x: &Array2<f64>, centers: &mut Array2<f64>, labels: &mut [usize]) {
    let k = centers.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
        let far = (0..x.nrows())
            .filter(|&i| labels[i] == largest)
            .fold((usize::MAX, -1.0), |b, i| {
                let d = sq_dist(x.row(i), centers.row(largest));
                if d > b.1 {
                    (i, d)
                } else {
                    b
                }
            })
            .0;
        labels[far] = empty;
        centers.row_mut(empty).assign(&x.row(far));
    }
}

fn update(x: &Array2<f64>, centers: &mut Array2<f64>, labels: &[usize]) {
    let mut sums = Array2::<f64>::zeros(centers.dim());
    let mut counts = vec![0usize; centers.nrows()];
    for (i, &c) in labels.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += &x.row(i);
        counts[c] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centers.row_mut(c).assign(&(&sums.row(c) / count as f64));
        }
    }
}

pub fn kmeans_with_trace(e: &EmbeddingSet, k: usize, seed: u64, max_iters: usize) -> Result<KmeansRun> {
    let n = e.n();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in 1..={n}")));
    }
    if max_iters == 0 {
        return Err(Error::config("max_iters must be at least 1"));
    }
    let x = e.data();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(x, k, &mut rng);
    let mut labels = assign(x, &centers);
    repair_empty(x, &mut centers, &mut labels);
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        update(x, &mut centers, &labels);
        trace.push(objective(x, &centers, &labels));
        let mut next = assign(x, &centers);
        repair_empty(x, &mut centers, &mut next);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KmeansRun {
        partition: Partition::from_raw(&labels),
        centroids: centers,
        objective: trace,
    })
}

/// Seeded k-means++ followed by Lloyd iterations on Euclidean distance.
pub fn kmeans(e: &EmbeddingSet, k: usize, seed: u64, max_iters: usize) -> Result<Partition> {
    Ok(kmeans_with_trace(e, k, seed, max_iters)?.partition)
}
