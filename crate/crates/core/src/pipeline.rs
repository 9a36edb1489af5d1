//! Detection and segmentation GCNs over cluster proposals, and the greedy
//! de-overlapping that turns scored proposals into a partition.
//!
//! Each proposal is fed to the networks as its induced subgraph (row
//! normalized with self-loops) with the member embeddings, centered on the
//! proposal mean, as input features.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, LabelSet, Partition};
use crate::error::{Error, Result};
use crate::gcn::loss::{bce_with_logits, mse, sigmoid};
use crate::gcn::{gcn_backward, gcn_forward, GcnModel, Gradients, HeadKind, Output, Sgd, TrainConfig};
use crate::graph::{AffinityGraph, NormalizedAdjacency};
use crate::proposals::{generate_proposals, ClusterProposal, ProposalConfig};

/// Network input for one proposal.
#[derive(Debug, Clone)]
pub struct ProposalInput {
    pub adjacency: NormalizedAdjacency,
    pub features: Array2<f64>,
}

/// Member embeddings minus their mean, with the row-normalized induced
/// subgraph.
pub fn proposal_input(e: &EmbeddingSet, g: &AffinityGraph, vertices: &[usize]) -> Result<ProposalInput> {
    let sub = g.subgraph(vertices)?;
    let mut features = e.select(vertices)?.into_inner();
    let mean = features.mean_axis(Axis(0)).expect("nonempty proposal");
    features -= &mean;
    Ok(ProposalInput {
        adjacency: sub.graph.row_normalize()?,
        features,
    })
}

/// Best-match IoU of `vertices` against the truth classes.
pub fn detection_target(vertices: &[usize], truth: &LabelSet) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let sizes = class_sizes(truth);
    let mut overlap = std::collections::HashMap::new();
    for &v in vertices {
        *overlap.entry(truth.get(v)).or_insert(0usize) += 1;
    }
    overlap
        .into_iter()
        .map(|(c, inter)| inter as f64 / (vertices.len() + sizes[c] - inter) as f64)
        .fold(0.0, f64::max)
}

fn class_sizes(truth: &LabelSet) -> Vec<usize> {
    let mut sizes = vec![0; truth.num_classes()];
    for &l in truth.labels() {
        sizes[l] += 1;
    }
    sizes
}

/// Majority truth class of a proposal; ties go to the lower class id.
pub fn majority_class(vertices: &[usize], truth: &LabelSet) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for &v in vertices {
        *counts.entry(truth.get(v)).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
}

/// Per-vertex segmentation targets: 1 where the vertex belongs to the
/// proposal's majority class.
pub fn segmentation_targets(vertices: &[usize], truth: &LabelSet) -> Array1<f64> {
    let major = majority_class(vertices, truth);
    vertices
        .iter()
        .map(|&v| if Some(truth.get(v)) == major { 1.0 } else { 0.0 })
        .collect()
}

/// Proposals over one graph with the ground truth for its samples.
#[derive(Debug, Clone, Copy)]
pub struct TrainingGraph<'a> {
    pub embeddings: &'a EmbeddingSet,
    pub graph: &'a AffinityGraph,
    pub truth: &'a LabelSet,
    pub proposals: &'a [ClusterProposal],
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

enum Target {
    Score(f64),
    Vertex(Array1<f64>),
}

fn loss_and_grad(acts_output: &Output, target: &Target) -> (f64, Output) {
    match (acts_output, target) {
        (Output::Score(s), Target::Score(t)) => {
            let (l, g) = mse(*s, *t);
            (l, Output::Score(g))
        }
        (Output::VertexLogits(z), Target::Vertex(t)) => {
            let (l, g) = bce_with_logits(z, t);
            (l, Output::VertexLogits(g))
        }
        _ => unreachable!("targets built to match the head"),
    }
}

fn fit(
    head: HeadKind,
    samples: &[(ProposalInput, Target)],
    input_dim: usize,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::config("training needs at least one proposal"));
    }
    let mut dims = vec![input_dim];
    dims.extend(&cfg.hidden);
    if dims.len() < 2 {
        dims.push(input_dim);
    }
    let mut model = GcnModel::init(&dims, head, cfg.seed)?;
    let mut opt = Sgd::from_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut total = Gradients::zeros_like(&model);
            for &i in batch {
                let (input, target) = &samples[i];
                let acts = gcn_forward(&model, &input.adjacency, &input.features)?;
                let (loss, grad) = loss_and_grad(&acts.output, target);
                epoch_loss += loss;
                total.add_assign(&gcn_backward(&model, &input.adjacency, &acts, &grad)?);
            }
            total.scale(1.0 / batch.len() as f64);
            opt.step(&mut model, &total)?;
        }
        loss_curve.push(epoch_loss / samples.len() as f64);
    }
    Ok((model, TrainReport { loss_curve }))
}

fn input_dim(groups: &[TrainingGraph<'_>]) -> Result<usize> {
    let d = groups
        .first()
        .map(|g| g.embeddings.d())
        .ok_or_else(|| Error::config("no training graphs"))?;
    for g in groups {
        if g.embeddings.d() != d {
            return Err(Error::Shape("training graphs differ in embedding dimension".into()));
        }
        if g.truth.len() != g.embeddings.n() || g.graph.n() != g.embeddings.n() {
            return Err(Error::Shape("truth/graph/embedding sizes disagree".into()));
        }
    }
    Ok(d)
}

/// Trains the mean-pool regressor on best-match IoU targets with MSE.
pub fn train_detector(groups: &[TrainingGraph<'_>], cfg: &TrainConfig) -> Result<(GcnModel, TrainReport)> {
    let d = input_dim(groups)?;
    let mut samples = Vec::new();
    for g in groups {
        for p in g.proposals {
            let input = proposal_input(g.embeddings, g.graph, &p.vertices)?;
            samples.push((input, Target::Score(detection_target(&p.vertices, g.truth))));
        }
    }
    fit(HeadKind::MeanPool, &samples, d, cfg)
}

/// Trains the per-vertex sigmoid head with BCE against majority-class
/// membership.
pub fn train_segmenter(groups: &[TrainingGraph<'_>], cfg: &TrainConfig) -> Result<(GcnModel, TrainReport)> {
    let d = input_dim(groups)?;
    let mut samples = Vec::new();
    for g in groups {
        for p in g.proposals {
            let input = proposal_input(g.embeddings, g.graph, &p.vertices)?;
            samples.push((input, Target::Vertex(segmentation_targets(&p.vertices, g.truth))));
        }
    }
    fit(HeadKind::VertexSigmoid, &samples, d, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProposal {
    pub proposal: ClusterProposal,
    pub score: f64,
    /// Members kept after segmentation; a subset of `proposal.vertices`.
    pub retained: Vec<usize>,
}

/// Descending score, then larger retained set, then lower first vertex.
fn rank(a: &ScoredProposal, b: &ScoredProposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.retained.len().cmp(&a.retained.len()))
        .then(a.retained.first().cmp(&b.retained.first()))
}

pub fn predict_score(m: &GcnModel, e: &EmbeddingSet, g: &AffinityGraph, vertices: &[usize]) -> Result<f64> {
    m.expect_head(HeadKind::MeanPool)?;
    let input = proposal_input(e, g, vertices)?;
    let acts = gcn_forward(m, &input.adjacency, &input.features)?;
    Ok(acts.score().expect("mean-pool head"))
}

/// Scores every proposal and drops those below `keep_threshold`, always
/// keeping the top-ranked one.
pub fn score_proposals(
    m: &GcnModel,
    proposals: &[ClusterProposal],
    e: &EmbeddingSet,
    g: &AffinityGraph,
    keep_threshold: f64,
) -> Result<Vec<ScoredProposal>> {
    m.expect_head(HeadKind::MeanPool)?;
    let scored: Vec<ScoredProposal> = proposals
        .par_iter()
        .map(|p| {
            let score = predict_score(m, e, g, &p.vertices)?;
            if !score.is_finite() {
                return Err(Error::Numerical("detector produced a non-finite score".into()));
            }
            Ok(ScoredProposal {
                proposal: p.clone(),
                score,
                retained: p.vertices.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let best = scored.iter().min_by(|a, b| rank(a, b)).cloned();
    let mut kept: Vec<ScoredProposal> = scored.into_iter().filter(|s| s.score >= keep_threshold).collect();
    if kept.is_empty() {
        kept.extend(best);
    }
    Ok(kept)
}

/// Per-vertex membership probabilities from the segmentation head.
pub fn vertex_probabilities(
    m: &GcnModel,
    e: &EmbeddingSet,
    g: &AffinityGraph,
    vertices: &[usize],
) -> Result<Array1<f64>> {
    m.expect_head(HeadKind::VertexSigmoid)?;
    let input = proposal_input(e, g, vertices)?;
    let acts = gcn_forward(m, &input.adjacency, &input.features)?;
    Ok(acts.vertex_logits().expect("vertex head").mapv(sigmoid))
}

/// Keeps members with probability at or above `threshold`, falling back to
/// the single most likely member.
pub fn retain_by_probability(vertices: &[usize], probs: &Array1<f64>, threshold: f64) -> Vec<usize> {
    let kept: Vec<usize> = vertices
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p >= threshold)
        .map(|(&v, _)| v)
        .collect();
    if !kept.is_empty() || vertices.is_empty() {
        return kept;
    }
    let best = probs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > probs[b] { i } else { b });
    vec![vertices[best]]
}

pub fn segment_proposal(
    m: &GcnModel,
    vertices: &[usize],
    e: &EmbeddingSet,
    g: &AffinityGraph,
    prob_threshold: f64,
) -> Result<Vec<usize>> {
    let probs = vertex_probabilities(m, e, g, vertices)?;
    Ok(retain_by_probability(vertices, &probs, prob_threshold))
}

/// Greedy assignment in rank order; leftovers become singletons.
pub fn deoverlap(scored: &[ScoredProposal], n: usize) -> Result<Partition> {
    for s in scored {
        if let Some(&bad) = s.retained.iter().find(|&&v| v >= n) {
            return Err(Error::Bounds { index: bad, len: n });
        }
    }
    let mut order: Vec<&ScoredProposal> = scored.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    let mut assignment = vec![usize::MAX; n];
    let mut next = 0;
    for s in order {
        let mut fresh = false;
        for &v in &s.retained {
            if assignment[v] == usize::MAX {
                assignment[v] = next;
                fresh = true;
            }
        }
        if fresh {
            next += 1;
        }
    }
    for a in &mut assignment {
        if *a == usize::MAX {
            *a = next;
            next += 1;
        }
    }
    Partition::new(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub proposals: ProposalConfig,
    pub keep_threshold: f64,
    pub prob_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            proposals: ProposalConfig::default(),
            keep_threshold: f64::NEG_INFINITY,
            prob_threshold: 0.5,
        }
    }
}

/// Proposals, detection, segmentation and de-overlapping over one graph.
pub fn cluster(
    e: &EmbeddingSet,
    g: &AffinityGraph,
    detector: &GcnModel,
    segmenter: &GcnModel,
    cfg: &ClusterConfig,
) -> Result<Partition> {
    detector.expect_head(HeadKind::MeanPool)?;
    segmenter.expect_head(HeadKind::VertexSigmoid)?;
    let proposals = generate_proposals(g, e, &cfg.proposals)?;
    let mut scored = score_proposals(detector, &proposals, e, g, cfg.keep_threshold)?;
    let retained: Vec<Vec<usize>> = scored
        .par_iter()
        .map(|s| segment_proposal(segmenter, &s.proposal.vertices, e, g, cfg.prob_threshold))
        .collect::<Result<_>>()?;
    for (s, r) in scored.iter_mut().zip(retained) {
        s.retained = r;
    }
    deoverlap(&scored, e.n())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(vertices: &[usize], score: f64) -> ScoredProposal {
        ScoredProposal {
            proposal: ClusterProposal {
                vertices: vertices.to_vec(),
                level: 1,
                source: vec![],
            },
            score,
            retained: vertices.to_vec(),
        }
    }

    #[test]
    fn iou_against_best_class() {
        let truth = LabelSet::new(vec![0, 0, 0, 1, 1]).unwrap();
        // classes {0,1,2} (ids 0..3 -> a) and {3,4}
        assert!((detection_target(&[1, 2, 3], &truth) - 2.0 / 4.0).abs() < 1e-15);
        let truth = LabelSet::new(vec![0, 0, 1, 1]).unwrap();
        assert!((detection_target(&[0, 1, 2], &truth) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(detection_target(&[2, 3], &truth), 1.0);
        let big = LabelSet::new(vec![0; 10]).unwrap();
        assert!((detection_target(&[4], &big) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn majority_positives() {
        let truth = LabelSet::new(vec![0, 0, 1]).unwrap();
        assert_eq!(segmentation_targets(&[0, 1, 2], &truth).to_vec(), vec![1.0, 1.0, 0.0]);
        assert_eq!(segmentation_targets(&[0, 1], &truth).to_vec(), vec![1.0, 1.0]);
        // tie goes to the lower class id
        assert_eq!(majority_class(&[1, 2], &truth), Some(0));
    }

    #[test]
    fn greedy_deoverlap_trace() {
        let p = deoverlap(&[sp(&[0, 1, 2], 0.9), sp(&[2, 3], 0.8)], 5).unwrap();
        assert_eq!(p.clusters(), vec![vec![0, 1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn deoverlap_edge_cases() {
        assert_eq!(deoverlap(&[sp(&[0, 1, 2], 0.1)], 3).unwrap().n_clusters(), 1);
        assert_eq!(deoverlap(&[], 3).unwrap().assignment(), &[0, 1, 2]);
        assert!(matches!(deoverlap(&[sp(&[5], 1.0)], 3), Err(Error::Bounds { .. })));
    }

    #[test]
    fn deoverlap_ties_prefer_larger_sets() {
        let p = deoverlap(&[sp(&[1, 2], 0.5), sp(&[0, 1, 2], 0.5)], 3).unwrap();
        assert_eq!(p.n_clusters(), 1);
    }

    #[test]
    fn retain_rules() {
        let probs = Array1::from(vec![0.9, 0.4, 0.7]);
        assert_eq!(retain_by_probability(&[10, 11, 12], &probs, 0.5), vec![10, 12]);
        assert_eq!(retain_by_probability(&[10, 11, 12], &probs, 0.0), vec![10, 11, 12]);
        assert_eq!(retain_by_probability(&[10, 11, 12], &probs, 1.0 + 1e-9), vec![10]);
    }

    #[test]
    fn centering_removes_constant_offsets() {
        let e = EmbeddingSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0], vec![0.0, 1.0]]).unwrap();
        let shifted = EmbeddingSet::new(e.data() + &ndarray::array![10.0, -4.0]).unwrap();
        let g = AffinityGraph::from_edges(3, 1, &[(0, 1, 0.5)]).unwrap();
        let a = proposal_input(&e, &g, &[0, 1, 2]).unwrap();
        let b = proposal_input(&shifted, &g, &[0, 1, 2]).unwrap();
        assert!((&a.features - &b.features).iter().all(|d| d.abs() < 1e-12));
    }
}
