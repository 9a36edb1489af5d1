//! Losses paired with their gradients with respect to raw model outputs.

use ndarray::{Array1, Array2, Axis};

/// Floor applied to probabilities before taking a log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean cross-entropy over the rows in `rows`, each with target class
/// `targets[r]`. Returns the loss and its gradient with respect to the full
/// logit matrix (zero on rows not selected).
pub fn cross_entropy(logits: &Array2<f64>, rows: &[usize], targets: &[usize]) -> (f64, Array2<f64>) {
    assert_eq!(rows.len(), targets.len());
    let probs = softmax_rows(logits);
    let mut grad = Array2::zeros(logits.raw_dim());
    if rows.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for (&r, &t) in rows.iter().zip(targets) {
        loss -= probs[[r, t]].max(LOG_FLOOR).ln();
        let mut g = grad.row_mut(r);
        g.assign(&probs.row(r));
        g[t] -= 1.0;
        g.mapv_inplace(|v| v * scale);
    }
    (loss * scale, grad)
}

/// Squared error of a scalar prediction.
pub fn mse(prediction: f64, target: f64) -> (f64, f64) {
    let diff = prediction - target;
    (diff * diff, 2.0 * diff)
}

/// Mean binary cross-entropy on logits, computed in the softplus form.
pub fn bce_with_logits(logits: &Array1<f64>, targets: &Array1<f64>) -> (f64, Array1<f64>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len().max(1) as f64;
    let loss = logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n;
    let grad = ndarray::Zip::from(logits)
        .and(targets)
        .map_collect(|&z, &t| (sigmoid(z) - t) / n);
    (loss, grad)
}
