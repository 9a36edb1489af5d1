//! Pseudo-labels from per-meeting clusterings and retraining with a loss
//! that blends the given label with the model's own prediction.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, LabelSet, MeetingIndex, Partition};
use crate::error::{Error, Result};
use crate::gcn::loss::{softmax_rows, LOG_FLOOR};
use crate::gcn::{MatrixDoc, ModelDocument, MODEL_FORMAT};

/// Pseudo-labels with dense local ids; global class id is `offset + id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub labels: LabelSet,
    pub offset: usize,
}

/// Makes cluster ids unique across meetings by numbering each meeting's
/// clusters after the previous meeting's. Samples are indexed globally; the
/// meetings must cover `0..n` exactly.
pub fn assign_pseudo_labels(partitions: &[Partition], m: &MeetingIndex, offset: usize) -> Result<PseudoLabels> {
    if partitions.len() != m.len() {
        return Err(Error::config(format!(
            "{} partitions for {} meetings",
            partitions.len(),
            m.len()
        )));
    }
    let n: usize = m.meetings().iter().map(Vec::len).sum();
    m.check_cover(n)?;
    let mut labels = vec![0; n];
    let mut base = 0;
    for (k, (p, members)) in partitions.iter().zip(m.meetings()).enumerate() {
        if p.len() != members.len() {
            return Err(Error::config(format!(
                "meeting {k} has {} samples but its partition has {}",
                members.len(),
                p.len()
            )));
        }
        for (j, &i) in members.iter().enumerate() {
            labels[i] = base + p.get(j);
        }
        base += p.n_clusters();
    }
    let names = (0..base).map(|c| (offset + c).to_string()).collect();
    Ok(PseudoLabels {
        labels: LabelSet::new(labels)?.with_names(names)?,
        offset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseConfig {
    /// Final weight of the prediction term.
    pub alpha_final: f64,
    pub lambda: f64,
    /// Total number of mini-batch iterations.
    pub iterations: usize,
    pub batch_size: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            alpha_final: 0.8,
            lambda: 2.0,
            iterations: 2000,
            batch_size: 32,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_final) {
            return Err(Error::Domain {
                value: self.alpha_final,
                domain: "alpha_final in [0, 1]",
            });
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain {
                value: self.lambda,
                domain: "lambda > 0",
            });
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::config("iterations and batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// `alpha_final * (t / T)^lambda`.
pub fn alpha_schedule(t: usize, cfg: &DenoiseConfig) -> Result<f64> {
    cfg.validate()?;
    if t > cfg.iterations {
        return Err(Error::Domain {
            value: t as f64,
            domain: "iteration in 0..=T",
        });
    }
    if t == cfg.iterations {
        return Ok(cfg.alpha_final);
    }
    Ok(cfg.alpha_final * (t as f64 / cfg.iterations as f64).powf(cfg.lambda))
}

/// Arg-max per row, lower index on ties.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                .0
        })
        .collect()
}

/// `-(1/B) sum[(1-alpha) log P[i, y_i] + alpha log P[i, yhat_i]]` and its
/// gradient with respect to the logits that produced `posteriors`, holding
/// `yhat` fixed.
pub fn denoise_loss(
    posteriors: &Array2<f64>,
    given: &[usize],
    predicted: &[usize],
    alpha: f64,
) -> Result<(f64, Array2<f64>)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain {
            value: alpha,
            domain: "alpha in [0, 1]",
        });
    }
    let (b, c) = posteriors.dim();
    if given.len() != b || predicted.len() != b {
        return Err(Error::Shape(format!(
            "{} given and {} predicted labels for {b} rows",
            given.len(),
            predicted.len()
        )));
    }
    if let Some(&bad) = given.iter().chain(predicted).find(|&&l| l >= c) {
        return Err(Error::Bounds { index: bad, len: c });
    }
    if b == 0 {
        return Ok((0.0, Array2::zeros((0, c))));
    }
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = posteriors * scale;
    for i in 0..b {
        let (y, yh) = (given[i], predicted[i]);
        loss -= (1.0 - alpha) * posteriors[[i, y]].max(LOG_FLOOR).ln() + alpha * posteriors[[i, yh]].max(LOG_FLOOR).ln();
        grad[[i, y]] -= (1.0 - alpha) * scale;
        grad[[i, yh]] -= alpha * scale;
    }
    Ok((loss * scale, grad))
}

/// Linear softmax classifier over embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftClassifier {
    /// `d x C`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

pub const CLASSIFIER_HEAD: &str = "linear_softmax";

impl SoftClassifier {
    pub fn zeros(d: usize, classes: usize) -> Self {
        Self {
            weight: Array2::zeros((d, classes)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn posteriors(&self, x: &Array2<f64>) -> Array2<f64> {
        softmax_rows(&self.logits(x))
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.logits(x))
    }

    pub fn accuracy(&self, e: &EmbeddingSet, truth: &[usize]) -> f64 {
        let pred = self.predict(e.data());
        let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
        hits as f64 / truth.len().max(1) as f64
    }

    /// Unit-length projections `x W`, used as speaker embeddings for
    /// verification scoring.
    pub fn embed(&self, e: &EmbeddingSet) -> Result<EmbeddingSet> {
        EmbeddingSet::new(e.data().dot(&self.weight))?.l2_normalize()
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            head: CLASSIFIER_HEAD.into(),
            layers: vec![MatrixDoc::from_array(&self.weight)],
            readout: None,
            bias: Some(self.bias.to_vec()),
            metadata: Vec::new(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.head != CLASSIFIER_HEAD {
            return Err(Error::config(format!("expected a {CLASSIFIER_HEAD} model, found {:?}", doc.head)));
        }
        let [layer] = doc.layers.as_slice() else {
            return Err(Error::Shape("linear classifier has exactly one weight matrix".into()));
        };
        let weight = layer.to_array()?;
        let bias = Array1::from(doc.bias.clone().unwrap_or_default());
        if bias.len() != weight.ncols() {
            return Err(Error::Shape(format!("bias length {} for {} classes", bias.len(), weight.ncols())));
        }
        Ok(Self { weight, bias })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_document().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_document(&ModelDocument::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub alpha: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct SslRun {
    pub classifier: SoftClassifier,
    pub log: Vec<LogRow>,
}

impl SslRun {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,alpha,loss\n");
        for r in &self.log {
            writeln!(out, "{},{:.9},{:.9}", r.iteration, r.alpha, r.loss).expect("string write");
        }
        out
    }
}

/// Mini-batch SGD over the union of labeled and pseudo-labeled samples.
/// With `denoise` off the prediction term weight stays at zero.
pub fn ssl_train(
    labeled: (&EmbeddingSet, &LabelSet),
    pseudo: (&EmbeddingSet, &PseudoLabels),
    cfg: &SslConfig,
    schedule: &DenoiseConfig,
    denoise: bool,
) -> Result<SslRun> {
    schedule.validate()?;
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::config("learning_rate must be positive and momentum in [0, 1)"));
    }
    let (le, ll) = labeled;
    let (pe, pl) = pseudo;
    // With no pseudo-labels the pseudo embeddings are ignored entirely.
    if ll.len() != le.n() || (!pl.labels.is_empty() && pl.labels.len() != pe.n()) {
        return Err(Error::Shape("label and embedding counts differ".into()));
    }
    let d = le.d();
    if pe.d() != d && !pl.labels.is_empty() {
        return Err(Error::Shape(format!("labeled d={d} but pseudo d={}", pe.d())));
    }
    if !pl.labels.is_empty() && pl.offset < ll.num_classes() {
        return Err(Error::config(format!(
            "pseudo classes start at {} inside the {} labeled classes",
            pl.offset,
            ll.num_classes()
        )));
    }
    let classes = if pl.labels.is_empty() {
        ll.num_classes()
    } else {
        pl.offset + pl.labels.num_classes()
    };
    let mut x = le.data().clone();
    let mut y: Vec<usize> = ll.labels().to_vec();
    if !pl.labels.is_empty() {
        x.append(Axis(0), pe.data().view()).expect("matching widths");
        y.extend(pl.labels.labels().iter().map(|&c| pl.offset + c));
    }
    let n = y.len();
    if n == 0 || classes == 0 {
        return Err(Error::config("no training samples"));
    }
    let mut model = SoftClassifier::zeros(d, classes);
    let mut vw = Array2::<f64>::zeros((d, classes));
    let mut vb = Array1::<f64>::zeros(classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut log = Vec::with_capacity(schedule.iterations);
    for t in 1..=schedule.iterations {
        let alpha = if denoise { alpha_schedule(t, schedule)? } else { 0.0 };
        let mut batch = Vec::with_capacity(schedule.batch_size);
        while batch.len() < schedule.batch_size.min(n) {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let xb = x.select(Axis(0), &batch);
        let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
        let probs = model.posteriors(&xb);
        let yhat = argmax_rows(&probs);
        let (loss, grad) = denoise_loss(&probs, &yb, &yhat, alpha)?;
        let gw = xb.t().dot(&grad);
        let gb = grad.sum_axis(Axis(0));
        vw = &vw * cfg.momentum + &gw;
        vb = &vb * cfg.momentum + &gb;
        model.weight.scaled_add(-cfg.learning_rate, &vw);
        model.bias.scaled_add(-cfg.learning_rate, &vb);
        if !loss.is_finite() || model.weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite state at iteration {t}")));
        }
        log.push(LogRow { iteration: t, alpha, loss });
    }
    Ok(SslRun { classifier: model, log })
}
