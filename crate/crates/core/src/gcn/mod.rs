//! Dense GCN machinery: forward propagation over a normalized adjacency,
//! hand-derived backward pass, SGD with momentum, and the transductive node
//! classifier.
//!
//! Every hidden layer computes `H' = relu(A H W)`. The head decides what
//! happens after the last layer:
//!
//! * [`HeadKind::Softmax`]: the last layer has no activation and its output
//!   rows are class logits.
//! * [`HeadKind::MeanPool`]: all layers use ReLU, node rows are averaged and
//!   a linear readout produces one scalar per graph.
//! * [`HeadKind::VertexSigmoid`]: all layers use ReLU and a linear readout
//!   gives one logit per node.

mod classifier;
pub mod loss;
mod modelfile;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

pub use classifier::{node_classifier_fit_predict, NodePredictions};
pub use modelfile::{MatrixDoc, ModelDocument, ReadoutDoc, MODEL_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Softmax,
    MeanPool,
    VertexSigmoid,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Softmax => "softmax",
            HeadKind::MeanPool => "mean_pool",
            HeadKind::VertexSigmoid => "vertex_sigmoid",
        }
    }

    fn has_readout(self) -> bool {
        !matches!(self, HeadKind::Softmax)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub weight: Array1<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    layers: Vec<Array2<f64>>,
    head: HeadKind,
    readout: Option<Readout>,
}

impl GcnModel {
    pub fn new(layers: Vec<Array2<f64>>, head: HeadKind, readout: Option<Readout>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("model needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} columns but layer {} expects {}",
                    pair[0].ncols(),
                    k + 1,
                    pair[1].nrows()
                )));
            }
        }
        let out_dim = layers.last().expect("nonempty").ncols();
        match (&readout, head.has_readout()) {
            (Some(r), true) if r.weight.len() != out_dim => {
                return Err(Error::Shape(format!(
                    "readout has {} weights for {out_dim} features",
                    r.weight.len()
                )))
            }
            (None, true) => return Err(Error::Shape(format!("{} head needs a readout", head.name()))),
            (Some(_), false) => return Err(Error::Shape("softmax head takes no readout".into())),
            _ => {}
        }
        let finite = layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
            && readout
                .as_ref()
                .is_none_or(|r| r.bias.is_finite() && r.weight.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numerical("model has non-finite weights".into()));
        }
        Ok(Self {
            layers,
            head,
            readout,
        })
    }

    /// Glorot-uniform weights for a model with the given layer widths
    /// (`dims[0]` is the input width). Readout weights use the same rule with
    /// fan-out 1 and a zero bias.
    pub fn init(dims: &[usize], head: HeadKind, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, fan_out: usize, shape: (usize, usize)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn(shape, |_| rng.random_range(-limit..limit))
        };
        let layers: Vec<Array2<f64>> = dims
            .windows(2)
            .map(|w| uniform(w[0], w[1], (w[0], w[1])))
            .collect();
        let readout = head.has_readout().then(|| {
            let last = *dims.last().expect("nonempty");
            Readout {
                weight: uniform(last, 1, (1, last)).into_shape_with_order(last).expect("flat"),
                bias: 0.0,
            }
        });
        Self::new(layers, head, readout)
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn expect_head(&self, head: HeadKind) -> Result<()> {
        if self.head == head {
            Ok(())
        } else {
            Err(Error::ModelKind {
                expected: head.name(),
                found: self.head.name(),
            })
        }
    }

    fn relu_after(&self, k: usize) -> bool {
        self.head.has_readout() || k + 1 < self.layers.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// `n x C` class logits.
    Logits(Array2<f64>),
    /// Graph-level regression value.
    Score(f64),
    /// One logit per node.
    VertexLogits(Array1<f64>),
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `H^(k)` for every layer `k`, starting with the input features.
    pub inputs: Vec<Array2<f64>>,
    /// `A H^(k)`
    pub propagated: Vec<Array2<f64>>,
    /// `A H^(k) W^(k)` before the activation.
    pub pre: Vec<Array2<f64>>,
    /// Output of the last layer (after ReLU where the head applies it).
    pub last: Array2<f64>,
    pub output: Output,
}

impl Activations {
    pub fn logits(&self) -> Option<&Array2<f64>> {
        match &self.output {
            Output::Logits(z) => Some(z),
            _ => None,
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self.output {
            Output::Score(s) => Some(s),
            _ => None,
        }
    }

    pub fn vertex_logits(&self) -> Option<&Array1<f64>> {
        match &self.output {
            Output::VertexLogits(z) => Some(z),
            _ => None,
        }
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn gcn_forward(m: &GcnModel, a: &NormalizedAdjacency, h0: &Array2<f64>) -> Result<Activations> {
    if h0.nrows() != a.n() {
        return Err(Error::Shape(format!(
            "features have {} rows but the adjacency has {}",
            h0.nrows(),
            a.n()
        )));
    }
    let mut inputs = Vec::with_capacity(m.layers.len());
    let mut propagated = Vec::with_capacity(m.layers.len());
    let mut pre = Vec::with_capacity(m.layers.len());
    let mut h = h0.clone();
    for (k, w) in m.layers.iter().enumerate() {
        if h.ncols() != w.nrows() {
            return Err(Error::Shape(format!(
                "layer {k} expects {} input columns, got {}",
                w.nrows(),
                h.ncols()
            )));
        }
        let p = a.apply(&h);
        let z = p.dot(w);
        let next = if m.relu_after(k) { relu(&z) } else { z.clone() };
        inputs.push(h);
        propagated.push(p);
        pre.push(z);
        h = next;
    }
    let output = match (m.head, &m.readout) {
        (HeadKind::Softmax, _) => Output::Logits(h.clone()),
        (HeadKind::MeanPool, Some(r)) => {
            let pooled = h.mean_axis(Axis(0)).expect("at least one node");
            Output::Score(pooled.dot(&r.weight) + r.bias)
        }
        (HeadKind::VertexSigmoid, Some(r)) => Output::VertexLogits(h.dot(&r.weight) + r.bias),
        _ => unreachable!("readout presence checked at construction"),
    };
    Ok(Activations {
        inputs,
        propagated,
        pre,
        last: h,
        output,
    })
}

/// Gradients with the same layout as a [`GcnModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Array2<f64>>,
    pub readout: Option<Readout>,
}

impl Gradients {
    pub fn zeros_like(m: &GcnModel) -> Self {
        Self {
            layers: m.layers.iter().map(|l| Array2::zeros(l.raw_dim())).collect(),
            readout: m.readout.as_ref().map(|r| Readout {
                weight: Array1::zeros(r.weight.len()),
                bias: 0.0,
            }),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut self.readout, &other.readout) {
            a.weight += &b.weight;
            a.bias += b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.mapv_inplace(|v| v * s);
        }
        if let Some(r) = &mut self.readout {
            r.weight.mapv_inplace(|v| v * s);
            r.bias *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
            && self
                .readout
                .as_ref()
                .is_none_or(|r| r.bias.is_finite() && r.weight.iter().all(|v| v.is_finite()))
    }

    fn matches(&self, m: &GcnModel) -> bool {
        self.layers.len() == m.layers.len()
            && self.layers.iter().zip(&m.layers).all(|(g, w)| g.dim() == w.dim())
            && match (&self.readout, &m.readout) {
                (Some(g), Some(r)) => g.weight.len() == r.weight.len(),
                (None, None) => true,
                _ => false,
            }
    }
}

/// Exact gradients of a loss with respect to every weight, given the
/// gradient of that loss with respect to the head's raw output.
pub fn gcn_backward(
    m: &GcnModel,
    a: &NormalizedAdjacency,
    acts: &Activations,
    loss_grad: &Output,
) -> Result<Gradients> {
    if acts.inputs.len() != m.layers.len() || acts.last.nrows() != a.n() {
        return Err(Error::Shape("activations do not match this model/adjacency".into()));
    }
    for (k, (p, w)) in acts.propagated.iter().zip(&m.layers).enumerate() {
        if p.ncols() != w.nrows() || acts.pre[k].ncols() != w.ncols() {
            return Err(Error::Shape(format!("stale activations at layer {k}")));
        }
    }
    let n = a.n();
    let mut grads = Gradients::zeros_like(m);
    // gradient with respect to the last layer's output
    let mut d_h = match (m.head, &m.readout, loss_grad) {
        (HeadKind::Softmax, _, Output::Logits(g)) => {
            if g.dim() != acts.last.dim() {
                return Err(Error::Shape("logit gradient shape mismatch".into()));
            }
            g.clone()
        }
        (HeadKind::MeanPool, Some(r), Output::Score(g)) => {
            let pooled = acts.last.mean_axis(Axis(0)).expect("at least one node");
            let gr = grads.readout.as_mut().expect("readout gradient");
            gr.weight = pooled * *g;
            gr.bias = *g;
            let row = &r.weight * (*g / n as f64);
            row.broadcast((n, r.weight.len())).expect("broadcast").to_owned()
        }
        (HeadKind::VertexSigmoid, Some(r), Output::VertexLogits(g)) => {
            if g.len() != n {
                return Err(Error::Shape("vertex gradient length mismatch".into()));
            }
            let gr = grads.readout.as_mut().expect("readout gradient");
            gr.weight = acts.last.t().dot(g);
            gr.bias = g.sum();
            let g_col = g.view().insert_axis(Axis(1));
            let w_row = r.weight.view().insert_axis(Axis(0));
            g_col.dot(&w_row)
        }
        _ => {
            return Err(Error::Shape(format!(
                "loss gradient kind does not match the {} head",
                m.head.name()
            )))
        }
    };
    for k in (0..m.layers.len()).rev() {
        let d_z = if m.relu_after(k) {
            let mut d = d_h;
            ndarray::Zip::from(&mut d)
                .and(&acts.pre[k])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            d
        } else {
            d_h
        };
        grads.layers[k] = acts.propagated[k].t().dot(&d_z);
        d_h = if k > 0 {
            a.apply_transpose(&d_z.dot(&m.layers[k].t()))
        } else {
            Array2::zeros((0, 0))
        };
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden layer widths; the output width is implied by the task.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            hidden: vec![64, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// SGD with classical momentum: `v = mu * v + g; w -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: None,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.momentum)
    }

    pub fn step(&mut self, m: &mut GcnModel, grads: &Gradients) -> Result<()> {
        if !grads.matches(m) {
            return Err(Error::Shape("gradient layout does not match the model".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let velocity = self.velocity.get_or_insert_with(|| Gradients::zeros_like(m));
        velocity.scale(self.momentum);
        velocity.add_assign(grads);
        let lr = self.learning_rate;
        for (w, v) in m.layers.iter_mut().zip(&velocity.layers) {
            w.scaled_add(-lr, v);
        }
        if let (Some(r), Some(v)) = (&mut m.readout, &velocity.readout) {
            r.weight.scaled_add(-lr, &v.weight);
            r.bias -= lr * v.bias;
        }
        Ok(())
    }
}

/// One SGD step on a copy of `m`.
pub fn sgd_step(m: &GcnModel, grads: &Gradients, opt: &mut Sgd) -> Result<GcnModel> {
    let mut out = m.clone();
    opt.step(&mut out, grads)?;
    Ok(out)
}
