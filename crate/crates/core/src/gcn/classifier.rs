use ndarray::{Array2, Axis};

use super::loss::{cross_entropy, softmax_rows};
use super::{gcn_backward, gcn_forward, GcnModel, HeadKind, Output, Sgd, TrainConfig};
use crate::data::{LabelSet, Partition};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Result of transductive node classification.
#[derive(Debug, Clone)]
pub struct NodePredictions {
    /// Arg-max class per node (lower class id on ties).
    pub classes: Vec<usize>,
    /// `C x N` posterior matrix; column `i` is node `i`'s distribution.
    pub posteriors: Array2<f64>,
    pub model: GcnModel,
    /// Cross-entropy on labeled nodes after each epoch.
    pub loss_curve: Vec<f64>,
}

impl NodePredictions {
    pub fn partition(&self) -> Partition {
        Partition::from_raw(&self.classes)
    }
}

/// Two-layer GCN node classifier trained full-batch with cross-entropy on
/// the labeled nodes: `softmax(A relu(A H W0) W1)`.
pub fn node_classifier_fit_predict(
    a: &NormalizedAdjacency,
    h0: &Array2<f64>,
    labels: &LabelSet,
    cfg: &TrainConfig,
) -> Result<NodePredictions> {
    cfg.validate()?;
    if labels.len() != a.n() || h0.nrows() != a.n() {
        return Err(Error::Shape(format!(
            "{} labels and {} feature rows for {} nodes",
            labels.len(),
            h0.nrows(),
            a.n()
        )));
    }
    let classes = labels.num_classes();
    let (rows, targets): (Vec<usize>, Vec<usize>) = (0..labels.len())
        .filter(|&i| labels.is_labeled(i))
        .map(|i| (i, labels.get(i)))
        .unzip();
    let mut covered = vec![false; classes];
    for &t in &targets {
        covered[t] = true;
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::Coverage(missing));
    }
    let hidden = cfg.hidden.first().copied().unwrap_or(16);
    let mut model = GcnModel::init(&[h0.ncols(), hidden, classes], HeadKind::Softmax, cfg.seed)?;
    let mut opt = Sgd::from_config(cfg);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let acts = gcn_forward(&model, a, h0)?;
        let (_, grad) = cross_entropy(acts.logits().expect("softmax head"), &rows, &targets);
        let grads = gcn_backward(&model, a, &acts, &Output::Logits(grad))?;
        opt.step(&mut model, &grads)?;
        let after = gcn_forward(&model, a, h0)?;
        loss_curve.push(cross_entropy(after.logits().expect("softmax head"), &rows, &targets).0);
    }
    let acts = gcn_forward(&model, a, h0)?;
    let probs = softmax_rows(acts.logits().expect("softmax head"));
    let classes_out = probs
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect();
    Ok(NodePredictions {
        classes: classes_out,
        posteriors: probs.reversed_axes(),
        model,
        loss_curve,
    })
}
