//! Independent reference implementations used by the integration tests.
//! Everything here is written against plain `Vec`s with naive loops so it
//! shares no code path with the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcncluster::data::EmbeddingSet;
use gcncluster::graph::AffinityGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Dense normalized adjacency of `W + I` (negative weights clamped).
pub fn dense_normalized(g: &AffinityGraph, symmetric: bool) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut w = vec![vec![0.0; n]; n];
    for (i, j, x) in g.edges() {
        w[i][j] = x.max(0.0);
        w[j][i] = x.max(0.0);
    }
    for (i, row) in w.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let deg: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if symmetric {
                        w[i][j] / (deg[i] * deg[j]).sqrt()
                    } else {
                        w[i][j] / deg[i]
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleHead {
    Softmax,
    MeanPool { weight: Vec<f64>, bias: f64 },
    VertexSigmoid { weight: Vec<f64>, bias: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutput {
    Logits(Vec<Vec<f64>>),
    Score(f64),
    Vertex(Vec<f64>),
}

/// Matrix-chain forward pass: `relu(A H W)` per layer, no activation after
/// the last layer of a softmax model.
pub fn dense_forward(a: &[Vec<f64>], h0: &[Vec<f64>], layers: &[Vec<Vec<f64>>], head: &OracleHead) -> OracleOutput {
    let mut h = h0.to_vec();
    for (k, w) in layers.iter().enumerate() {
        let z = matmul(&matmul(a, &h), w);
        let last_linear = k + 1 == layers.len() && matches!(head, OracleHead::Softmax);
        h = if last_linear {
            z
        } else {
            z.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
        };
    }
    match head {
        OracleHead::Softmax => OracleOutput::Logits(h),
        OracleHead::MeanPool { weight, bias } => {
            let cols = weight.len();
            let mut s = *bias;
            for c in 0..cols {
                let mean = h.iter().map(|r| r[c]).sum::<f64>() / h.len() as f64;
                s += mean * weight[c];
            }
            OracleOutput::Score(s)
        }
        OracleHead::VertexSigmoid { weight, bias } => OracleOutput::Vertex(
            h.iter()
                .map(|r| r.iter().zip(weight).map(|(x, w)| x * w).sum::<f64>() + bias)
                .collect(),
        ),
    }
}

/// `(same-cluster pairs in both, in pred, in truth)` by enumerating pairs.
pub fn brute_pair_counts(pred: &[usize], truth: &[usize]) -> (u64, u64, u64) {
    let (mut tp, mut pp, mut tt) = (0, 0, 0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let p = pred[i] == pred[j];
            let t = truth[i] == truth[j];
            tp += (p && t) as u64;
            pp += p as u64;
            tt += t as u64;
        }
    }
    (tp, pp, tt)
}

pub fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

struct Uf(Vec<usize>);

impl Uf {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn join(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of `members` over `edges` with weight `>= tau`.
pub fn components_at(n: usize, members: &[usize], edges: &[(usize, usize, f64)], tau: f64) -> Vec<Vec<usize>> {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut uf = Uf((0..n).collect());
    for &(i, j, w) in edges {
        if w >= tau && inside.contains(&i) && inside.contains(&j) {
            uf.join(i, j);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &v in &inside {
        by_root.entry(uf.find(v)).or_default().push(v);
    }
    by_root.into_values().collect()
}

/// Threshold-escalation super-vertices: `(group, threshold)` sorted by
/// first member.
pub fn super_vertex_oracle(
    n: usize,
    edges: &[(usize, usize, f64)],
    tau0: f64,
    step: f64,
    s_max: usize,
) -> Vec<(Vec<usize>, f64)> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        n: usize,
        edges: &[(usize, usize, f64)],
        members: &[usize],
        tau: f64,
        step: f64,
        s_max: usize,
        depth: usize,
        tau0: f64,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if tau >= 1.0 {
            out.extend(members.iter().map(|&v| (vec![v], tau)));
            return;
        }
        for comp in components_at(n, members, edges, tau) {
            if comp.len() <= s_max {
                out.push((comp, tau));
            } else {
                let next = tau0 + (depth + 1) as f64 * step;
                recurse(n, edges, &comp, next, step, s_max, depth + 1, tau0, out);
            }
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    recurse(n, edges, &all, tau0, step, s_max, 0, tau0, &mut out);
    out.sort_by_key(|(g, _)| g[0]);
    out
}

/// `(miss, false alarm)` at every distinct score used as a `>=` threshold,
/// plus one threshold above every score.
pub fn sweep_points(tgt: &[f64], non: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = tgt.iter().chain(non).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut points: Vec<(f64, f64)> = cuts
        .iter()
        .map(|&c| {
            let miss = tgt.iter().filter(|&&s| s < c).count();
            let fa = non.iter().filter(|&&s| s >= c).count();
            (miss as f64 / tgt.len() as f64, fa as f64 / non.len() as f64)
        })
        .collect();
    points.push((1.0, 0.0));
    points
}

/// EER from the sweep: the first point where miss and false alarm meet, or
/// the linear interpolation across the first sign change of `miss - fa`.
pub fn eer_oracle(tgt: &[f64], non: &[f64]) -> f64 {
    let pts = sweep_points(tgt, non);
    for i in 0..pts.len() - 1 {
        let (m1, f1) = pts[i];
        let (m2, f2) = pts[i + 1];
        let (d1, d2) = (m1 - f1, m2 - f2);
        if d1 == 0.0 {
            return m1;
        }
        if d1 < 0.0 && d2 >= 0.0 {
            let t = d1 / (d1 - d2);
            return m1 + t * (m2 - m1);
        }
    }
    1.0
}

pub fn min_dcf_oracle(tgt: &[f64], non: &[f64], p: f64, c_miss: f64, c_fa: f64) -> f64 {
    let norm = (c_miss * p).min(c_fa * (1.0 - p));
    let mut best = f64::INFINITY;
    for (miss, fa) in sweep_points(tgt, non) {
        best = best.min(c_miss * p * miss + c_fa * (1.0 - p) * fa);
    }
    best / norm
}

/// Characteristic polynomial coefficients `c[0..=n]` of `det(xI - M)`,
/// highest power first, by Faddeev-LeVerrier.
pub fn char_poly(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut coeffs = vec![1.0];
    let mut mk = vec![vec![0.0; n]; n];
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = matmul(m, &mk);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += c_prev;
        }
        mk = next;
        let amk = matmul(m, &mk);
        let trace: f64 = (0..n).map(|i| amk[i][i]).sum();
        c_prev = -trace / k as f64;
        coeffs.push(c_prev);
    }
    coeffs
}

fn horner(c: &[f64], x: f64) -> (f64, f64) {
    let (mut p, mut dp) = (0.0, 0.0);
    for &a in c {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Roots of a real-rooted polynomial, ascending. Newton from above the
/// largest root converges monotonically; each root is deflated and then
/// polished against the original polynomial.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let bound = 1.0 + coeffs[1..].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let mut work = coeffs.to_vec();
    let mut roots = Vec::new();
    while work.len() > 1 {
        let mut x = bound;
        for _ in 0..10_000 {
            let (p, dp) = horner(&work, x);
            if dp == 0.0 {
                break;
            }
            let nx = x - p / dp;
            if (nx - x).abs() <= 1e-15 * x.abs().max(1.0) {
                x = nx;
                break;
            }
            x = nx;
        }
        for _ in 0..100 {
            let (p, dp) = horner(coeffs, x);
            if dp == 0.0 || p == 0.0 {
                break;
            }
            let nx = x - p / dp;
            if (nx - x).abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
            x = nx;
        }
        roots.push(x);
        let mut q = Vec::with_capacity(work.len() - 1);
        let mut acc = 0.0;
        for &a in &work[..work.len() - 1] {
            acc = acc * x + a;
            q.push(acc);
        }
        work = q;
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Exact cosine kNN edge set: for each row, the `k` others with the highest
/// dot product (lower index first on ties), symmetrized by union.
pub fn knn_edges_oracle(rows: &[Vec<f64>], k: usize) -> BTreeSet<(usize, usize)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut out = BTreeSet::new();
    for i in 0..rows.len() {
        let mut others: Vec<(f64, usize)> = (0..rows.len())
            .filter(|&j| j != i)
            .map(|j| {
                let (a, b) = (i.min(j), i.max(j));
                (dot(&rows[a], &rows[b]), j)
            })
            .collect();
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            out.insert((i.min(j), i.max(j)));
        }
    }
    out
}

/// Unit-norm Gaussian rows.
pub fn random_unit_embeddings(n: usize, d: usize, seed: u64) -> EmbeddingSet {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    EmbeddingSet::from_rows(&rows).unwrap()
}

/// Random undirected weighted graph with weights uniform in `[lo, hi)`.
pub fn random_graph(n: usize, edges: usize, lo: f64, hi: f64, seed: u64) -> (AffinityGraph, Vec<(usize, usize, f64)>) {
    let mut r = rng(seed);
    let mut list = Vec::new();
    let mut seen = BTreeSet::new();
    if n >= 2 {
        for _ in 0..edges {
            let i = r.random_range(0..n);
            let j = r.random_range(0..n);
            if i != j && seen.insert((i.min(j), i.max(j))) {
                list.push((i.min(j), i.max(j), r.random_range(lo..hi)));
            }
        }
    }
    (AffinityGraph::from_edges(n, 0, &list).unwrap(), list)
}

/// Canonical form of a partition: sorted list of sorted member lists.
pub fn canonical(assignment: &[usize]) -> Vec<Vec<usize>> {
    let mut by: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &c) in assignment.iter().enumerate() {
        by.entry(c).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = by.into_values().collect();
    out.sort();
    out
}

/// Two well separated Gaussian blobs on the unit sphere.
pub fn blobs(sizes: &[usize], d: usize, spread: f64, seed: u64) -> (EmbeddingSet, Vec<usize>) {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, &size) in sizes.iter().enumerate() {
        let mut centre = vec![0.0; d];
        centre[c % d] = 1.0;
        if c >= d {
            centre[(c + 1) % d] = 1.0;
        }
        for _ in 0..size {
            let v: Vec<f64> = centre.iter().map(|x| x + spread * r.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.push(v.into_iter().map(|x| x / norm).collect());
            labels.push(c);
        }
    }
    (EmbeddingSet::from_rows(&rows).unwrap(), labels)
}

/// Target for one head, with the loss evaluated independently of the
/// library's loss functions.
#[derive(Debug, Clone)]
pub enum GradTarget {
    Classes(Vec<usize>),
    Score(f64),
    Vertex(Vec<f64>),
}

pub fn oracle_loss(out: &gcncluster::gcn::Output, target: &GradTarget) -> f64 {
    use gcncluster::gcn::Output;
    match (out, target) {
        (Output::Logits(z), GradTarget::Classes(t)) => {
            let mut total = 0.0;
            for (i, &c) in t.iter().enumerate() {
                let row = z.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[c];
            }
            total / t.len() as f64
        }
        (Output::Score(s), GradTarget::Score(t)) => (s - t) * (s - t),
        (Output::VertexLogits(z), GradTarget::Vertex(t)) => {
            let mut total = 0.0;
            for (zi, ti) in z.iter().zip(t) {
                let p = 1.0 / (1.0 + (-zi).exp());
                total -= ti * p.ln() + (1.0 - ti) * (1.0 - p).ln();
            }
            total / t.len() as f64
        }
        _ => panic!("target does not match head"),
    }
}

/// Library gradient of the library loss for `target`.
pub fn analytic_grad(
    m: &gcncluster::gcn::GcnModel,
    a: &gcncluster::graph::NormalizedAdjacency,
    h0: &Array2<f64>,
    target: &GradTarget,
) -> gcncluster::gcn::Gradients {
    use gcncluster::gcn::{gcn_backward, gcn_forward, loss, Output};
    let acts = gcn_forward(m, a, h0).unwrap();
    let g = match (&acts.output, target) {
        (Output::Logits(z), GradTarget::Classes(t)) => {
            let rows: Vec<usize> = (0..t.len()).collect();
            Output::Logits(loss::cross_entropy(z, &rows, t).1)
        }
        (Output::Score(s), GradTarget::Score(t)) => Output::Score(loss::mse(*s, *t).1),
        (Output::VertexLogits(z), GradTarget::Vertex(t)) => {
            Output::VertexLogits(loss::bce_with_logits(z, &ndarray::Array1::from(t.clone())).1)
        }
        _ => panic!("target does not match head"),
    };
    gcn_backward(m, a, &acts, &g).unwrap()
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Central differences with step `eps` on every weight. Coordinates whose
/// perturbation flips any ReLU pre-activation sign are skipped. Relative
/// error is `|a - f| / max(|a|, |f|, floor)`.
pub fn finite_difference_check(
    m: &gcncluster::gcn::GcnModel,
    a: &gcncluster::graph::NormalizedAdjacency,
    h0: &Array2<f64>,
    target: &GradTarget,
    eps: f64,
    floor: f64,
) -> GradCheck {
    use gcncluster::gcn::{gcn_forward, GcnModel, Readout};
    let grads = analytic_grad(m, a, h0, target);
    let masks = |model: &GcnModel| -> Vec<Vec<bool>> {
        gcn_forward(model, a, h0)
            .unwrap()
            .pre
            .iter()
            .map(|p| p.iter().map(|&v| v > 0.0).collect())
            .collect()
    };
    let base_mask = masks(m);
    let mut report = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = |build: &dyn Fn(f64) -> GcnModel, analytic: f64| {
        let (plus, minus) = (build(eps), build(-eps));
        if masks(&plus) != base_mask || masks(&minus) != base_mask {
            report.skipped += 1;
            return;
        }
        let lp = oracle_loss(&gcn_forward(&plus, a, h0).unwrap().output, target);
        let lm = oracle_loss(&gcn_forward(&minus, a, h0).unwrap().output, target);
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        report.max_rel_err = report.max_rel_err.max(rel);
        report.checked += 1;
    };
    for (k, layer) in m.layers().iter().enumerate() {
        for ((r, c), _) in layer.indexed_iter() {
            let build = |delta: f64| {
                let mut layers = m.layers().to_vec();
                layers[k][[r, c]] += delta;
                GcnModel::new(layers, m.head(), m.readout().cloned()).unwrap()
            };
            probe(&build, grads.layers[k][[r, c]]);
        }
    }
    if let (Some(ro), Some(gro)) = (m.readout(), &grads.readout) {
        for j in 0..=ro.weight.len() {
            let build = |delta: f64| {
                let mut r: Readout = ro.clone();
                if j < r.weight.len() {
                    r.weight[j] += delta;
                } else {
                    r.bias += delta;
                }
                GcnModel::new(m.layers().to_vec(), m.head(), Some(r)).unwrap()
            };
            let analytic = if j < ro.weight.len() { gro.weight[j] } else { gro.bias };
            probe(&build, analytic);
        }
    }
    report
}
