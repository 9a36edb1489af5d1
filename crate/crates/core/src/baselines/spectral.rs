use ndarray::{Array1, Array2};

use super::kmeans::kmeans;
use crate::data::{EmbeddingSet, Partition};
use crate::error::{Error, Result};
use crate::graph::AffinityGraph;

const ISOLATED_SELF_LOOP: f64 = 1e-8;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition with eigenvalues ascending; column `j` of `vectors`
/// belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations on a dense symmetric matrix.
pub fn jacobi_eigen(m: &Array2<f64>) -> Result<SymmetricEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// `I - D^{-1/2} W D^{-1/2}` with negative weights clamped and a tiny
/// self-loop on isolated vertices.
pub fn normalized_laplacian(g: &AffinityGraph) -> Array2<f64> {
    let n = g.n();
    let mut w = g.dense_nonnegative();
    for i in 0..n {
        if w.row(i).sum() <= 0.0 {
            w[[i, i]] += ISOLATED_SELF_LOOP;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * w[[i, j]] * inv_sqrt[j]
    })
}

/// Embeds vertices with the `k` smallest Laplacian eigenvectors, normalizes
/// the rows and runs K-means on them.
pub fn spectral(g: &AffinityGraph, k: usize, seed: u64) -> Result<Partition> {
    spectral_from_eigen(&jacobi_eigen(&normalized_laplacian(g))?, k, seed)
}

/// Spectral clustering from a precomputed Laplacian decomposition, for
/// sweeping `k` without repeating the eigensolve.
pub fn spectral_from_eigen(eig: &SymmetricEigen, k: usize, seed: u64) -> Result<Partition> {
    let n = eig.values.len();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rows = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    for mut row in rows.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    kmeans(&EmbeddingSet::new(rows)?, k, seed, 300)
}
