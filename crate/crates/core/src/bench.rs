//! Seeded synthetic clustering benchmark: the GCN pipeline against the
//! three baselines on meetings with a fixed number of speakers.
//!
//! Baseline parameters (cluster count or AHC threshold) are swept and the
//! best mean F-score per speaker-count group is reported, so the baselines
//! are given every advantage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ahc_dendrogram, cut_dendrogram, jacobi_eigen, kmeans, normalized_laplacian, spectral_from_eigen, AhcStop};
use crate::data::{synth_meetings, EmbeddingSet, LabelSet, Partition, SynthConfig};
use crate::error::{Error, Result};
use crate::gcn::{GcnModel, TrainConfig};
use crate::graph::{build_knn_graph, AffinityGraph};
use crate::metrics::{pairwise_prf, PrfResult};
use crate::pipeline::{cluster, train_detector, train_segmenter, ClusterConfig, TrainingGraph};
use crate::proposals::{generate_proposals, ClusterProposal, ProposalConfig};
use crate::ssl::{ssl_train, DenoiseConfig, PseudoLabels, SslConfig};

/// One meeting with its own affinity graph.
#[derive(Debug, Clone)]
pub struct Meeting {
    pub embeddings: EmbeddingSet,
    pub truth: LabelSet,
    pub graph: AffinityGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Template for generated meetings; `n_meetings`, `speakers_range` and
    /// `seed` are overridden.
    pub synth: SynthConfig,
    pub speaker_groups: Vec<usize>,
    pub meetings_per_group: usize,
    pub train_meetings: usize,
    /// Speakers per training meeting.
    pub train_speakers: (usize, usize),
    pub knn_k: usize,
    pub cluster: ClusterConfig,
    pub detector: TrainConfig,
    pub segmenter: TrainConfig,
    pub ahc_thresholds: Vec<f64>,
    /// Cluster counts tried for K-means and spectral, as multiples of the
    /// true speaker count, rounded and clamped to `1..=n`.
    pub k_factors: Vec<f64>,
    /// Neighbor counts tried for the spectral baseline's affinity graph.
    pub spectral_knn: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                utts_per_speaker_range: (4, 40),
                d: 16,
                intra_spread: 0.03,
                spread_scale_range: (0.5, 1.5),
                anisotropy: 20.0,
                ..SynthConfig::default()
            },
            speaker_groups: vec![3, 6, 9],
            meetings_per_group: 10,
            train_meetings: 30,
            train_speakers: (3, 9),
            knn_k: 10,
            cluster: ClusterConfig {
                proposals: ProposalConfig {
                    extra_tau0: vec![0.3, 0.4, 0.6, 0.7],
                    ..ProposalConfig::default()
                },
                ..ClusterConfig::default()
            },
            detector: TrainConfig::default(),
            segmenter: TrainConfig::default(),
            ahc_thresholds: (1..=40).map(|i| i as f64 * 0.025).collect(),
            k_factors: vec![0.5, 0.75, 1.0, 1.25, 1.5, 2.0],
            spectral_knn: vec![5, 10, 20],
        }
    }
}

/// Splits generated data into per-meeting sets with kNN graphs.
pub fn make_meetings(synth: &SynthConfig, knn_k: usize) -> Result<Vec<Meeting>> {
    let (e, labels, index) = synth_meetings(synth)?;
    index
        .meetings()
        .par_iter()
        .map(|members| {
            let embeddings = e.select(members)?.l2_normalize()?;
            let truth = labels.select(members)?;
            let k = knn_k.min(members.len() - 1).max(1);
            let graph = build_knn_graph(&embeddings, k)?;
            Ok(Meeting {
                embeddings,
                truth,
                graph,
            })
        })
        .collect()
}

/// Trains detector and segmenter on proposals over the given meetings.
pub fn train_models(meetings: &[Meeting], cfg: &BenchConfig) -> Result<(GcnModel, GcnModel)> {
    let proposals: Vec<Vec<ClusterProposal>> = meetings
        .par_iter()
        .map(|m| generate_proposals(&m.graph, &m.embeddings, &cfg.cluster.proposals))
        .collect::<Result<_>>()?;
    let groups: Vec<TrainingGraph<'_>> = meetings
        .iter()
        .zip(&proposals)
        .map(|(m, p)| TrainingGraph {
            embeddings: &m.embeddings,
            graph: &m.graph,
            truth: &m.truth,
            proposals: p,
        })
        .collect();
    let (detector, _) = train_detector(&groups, &cfg.detector)?;
    let (segmenter, _) = train_segmenter(&groups, &cfg.segmenter)?;
    Ok((detector, segmenter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    /// Chosen sweep value, if the method has one.
    pub param: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub speakers: usize,
    pub methods: Vec<MethodScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub seed: u64,
    pub groups: Vec<GroupResult>,
    /// Per-method averages over the groups.
    pub overall: Vec<MethodScore>,
}

impl BenchResult {
    pub fn method(&self, name: &str) -> Option<&MethodScore> {
        self.overall.iter().find(|m| m.method == name)
    }
}

fn mean_score(method: &str, param: Option<f64>, prfs: &[PrfResult]) -> MethodScore {
    let n = prfs.len().max(1) as f64;
    MethodScore {
        method: method.into(),
        param,
        precision: prfs.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: prfs.iter().map(|p| p.recall).sum::<f64>() / n,
        f_score: prfs.iter().map(|p| p.f_score).sum::<f64>() / n,
    }
}

/// Evaluates `run(meeting, param)` over all meetings for each parameter and
/// keeps the parameter with the best mean F-score (first on ties).
fn best_of<F>(method: &str, meetings: &[Meeting], params: &[f64], run: F) -> Result<MethodScore>
where
    F: Fn(usize, f64) -> Result<Partition> + Sync,
{
    let mut best: Option<MethodScore> = None;
    for &param in params {
        let prfs: Vec<PrfResult> = (0..meetings.len())
            .into_par_iter()
            .map(|i| pairwise_prf(&run(i, param)?, &meetings[i].truth))
            .collect::<Result<_>>()?;
        let score = mean_score(method, Some(param), &prfs);
        if best.as_ref().is_none_or(|b| score.f_score > b.f_score) {
            best = Some(score);
        }
    }
    best.ok_or_else(|| Error::config(format!("no parameters to sweep for {method}")))
}

/// Scores all four methods on one group of meetings.
pub fn evaluate_group(
    meetings: &[Meeting],
    speakers: usize,
    detector: &GcnModel,
    segmenter: &GcnModel,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<GroupResult> {
    let gcn: Vec<PrfResult> = meetings
        .par_iter()
        .map(|m| {
            let p = cluster(&m.embeddings, &m.graph, detector, segmenter, &cfg.cluster)?;
            pairwise_prf(&p, &m.truth)
        })
        .collect::<Result<_>>()?;
    let mut ks: Vec<f64> = cfg
        .k_factors
        .iter()
        .map(|f| (f * speakers as f64).round().max(1.0))
        .collect();
    ks.dedup();
    let k_for = |i: usize, k: f64| (k as usize).min(meetings[i].embeddings.n());
    let km = best_of("kmeans", meetings, &ks, |i, k| {
        kmeans(&meetings[i].embeddings, k_for(i, k), seed, 300)
    })?;
    let mut sc: Option<MethodScore> = None;
    for &knn in &cfg.spectral_knn {
        let eigs: Vec<_> = meetings
            .par_iter()
            .map(|m| {
                let k = knn.min(m.embeddings.n() - 1).max(1);
                jacobi_eigen(&normalized_laplacian(&build_knn_graph(&m.embeddings, k)?))
            })
            .collect::<Result<_>>()?;
        let score = best_of("spectral", meetings, &ks, |i, k| spectral_from_eigen(&eigs[i], k_for(i, k), seed))?;
        if sc.as_ref().is_none_or(|b| score.f_score > b.f_score) {
            sc = Some(score);
        }
    }
    let sc = sc.ok_or_else(|| Error::config("no spectral neighbor counts to sweep"))?;
    let dendrograms: Vec<_> = meetings.par_iter().map(|m| ahc_dendrogram(&m.embeddings)).collect();
    let ahc = best_of("ahc", meetings, &cfg.ahc_thresholds, |i, t| {
        cut_dendrogram(meetings[i].embeddings.n(), &dendrograms[i], AhcStop::Distance(t))
    })?;
    Ok(GroupResult {
        speakers,
        methods: vec![mean_score("gcn", None, &gcn), km, sc, ahc],
    })
}

/// Trains on fresh meetings and evaluates every speaker-count group; all
/// data and training randomness derives from `seed`.
pub fn run_benchmark(cfg: &BenchConfig, seed: u64) -> Result<BenchResult> {
    let base = seed.wrapping_mul(1_000_003);
    let train = make_meetings(
        &SynthConfig {
            n_meetings: cfg.train_meetings,
            speakers_range: cfg.train_speakers,
            seed: base,
            ..cfg.synth.clone()
        },
        cfg.knn_k,
    )?;
    let mut detector_cfg = cfg.detector.clone();
    detector_cfg.seed = base.wrapping_add(1);
    let mut segmenter_cfg = cfg.segmenter.clone();
    segmenter_cfg.seed = base.wrapping_add(2);
    let (detector, segmenter) = train_models(
        &train,
        &BenchConfig {
            detector: detector_cfg,
            segmenter: segmenter_cfg,
            ..cfg.clone()
        },
    )?;
    let mut groups = Vec::new();
    for (g, &speakers) in cfg.speaker_groups.iter().enumerate() {
        let meetings = make_meetings(
            &SynthConfig {
                n_meetings: cfg.meetings_per_group,
                speakers_range: (speakers, speakers),
                seed: base.wrapping_add(10 + g as u64),
                ..cfg.synth.clone()
            },
            cfg.knn_k,
        )?;
        groups.push(evaluate_group(&meetings, speakers, &detector, &segmenter, cfg, seed)?);
    }
    let overall = groups
        .first()
        .map(|first| {
            first
                .methods
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let n = groups.len() as f64;
                    let avg = |f: fn(&MethodScore) -> f64| groups.iter().map(|g| f(&g.methods[j])).sum::<f64>() / n;
                    MethodScore {
                        method: m.method.clone(),
                        param: None,
                        precision: avg(|s| s.precision),
                        recall: avg(|s| s.recall),
                        f_score: avg(|s| s.f_score),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(BenchResult { seed, groups, overall })
}

/// Paired label-noise experiment for the de-noising loss: clean labeled
/// speakers plus pseudo-labeled speakers whose labels are corrupted at
/// `noise_rate`, scored on held-out utterances of all speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseBenchConfig {
    pub synth: SynthConfig,
    /// Meetings whose speakers keep their true labels.
    pub labeled_meetings: usize,
    pub noise_rate: f64,
    /// Fraction of each speaker's utterances used for training.
    pub train_fraction: f64,
    pub ssl: SslConfig,
    pub schedule: DenoiseConfig,
}

impl Default for NoiseBenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                n_meetings: 8,
                speakers_range: (5, 5),
                utts_per_speaker_range: (20, 20),
                d: 32,
                intra_spread: 0.2,
                ..SynthConfig::default()
            },
            labeled_meetings: 4,
            noise_rate: 0.2,
            train_fraction: 0.5,
            ssl: SslConfig::default(),
            schedule: DenoiseConfig::default(),
        }
    }
}

/// Data of one noise trial, shared by paired runs.
#[derive(Debug, Clone)]
pub struct NoiseTrialData {
    pub labeled: (EmbeddingSet, LabelSet),
    pub pseudo: (EmbeddingSet, PseudoLabels),
    pub test: (EmbeddingSet, Vec<usize>),
}

pub fn noise_trial_data(cfg: &NoiseBenchConfig, seed: u64) -> Result<NoiseTrialData> {
    if !(0.0..=1.0).contains(&cfg.noise_rate) || !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::config("noise_rate must lie in [0, 1] and train_fraction in (0, 1)"));
    }
    let (e, labels, index) = synth_meetings(&SynthConfig {
        seed,
        ..cfg.synth.clone()
    })?;
    let e = e.l2_normalize()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let labeled_classes: usize = index.speakers_per_meeting()[..cfg.labeled_meetings.min(index.len())]
        .iter()
        .sum();
    let (mut lab_idx, mut pse_idx, mut test_idx) = (Vec::new(), Vec::new(), Vec::new());
    for members in labels.classes() {
        let cut = ((members.len() as f64) * cfg.train_fraction).round() as usize;
        let cut = cut.clamp(1, members.len() - 1);
        let target = if labels.get(members[0]) < labeled_classes { &mut lab_idx } else { &mut pse_idx };
        target.extend_from_slice(&members[..cut]);
        test_idx.extend_from_slice(&members[cut..]);
    }
    let pseudo_classes = labels.num_classes() - labeled_classes;
    let noisy: Vec<usize> = pse_idx
        .iter()
        .map(|&i| {
            let truth = labels.get(i) - labeled_classes;
            if pseudo_classes > 1 && rng.random::<f64>() < cfg.noise_rate {
                let other = rng.random_range(0..pseudo_classes - 1);
                if other >= truth {
                    other + 1
                } else {
                    other
                }
            } else {
                truth
            }
        })
        .collect();
    let labeled = (
        e.select(&lab_idx)?,
        LabelSet::new(lab_idx.iter().map(|&i| labels.get(i)).collect())?,
    );
    let pseudo = (
        e.select(&pse_idx)?,
        PseudoLabels {
            labels: LabelSet::compact(&noisy),
            offset: labeled_classes,
        },
    );
    // compact() renumbers by first appearance; map back to the true ids
    let pseudo = {
        let names: Vec<usize> = pseudo.1.labels.names().iter().map(|n| n.parse().expect("numeric")).collect();
        let relabeled: Vec<usize> = pseudo.1.labels.labels().iter().map(|&c| names[c]).collect();
        (pseudo.0, PseudoLabels { labels: LabelSet::new(relabeled)?, offset: labeled_classes })
    };
    let test = (e.select(&test_idx)?, test_idx.iter().map(|&i| labels.get(i)).collect());
    Ok(NoiseTrialData { labeled, pseudo, test })
}

/// Clean held-out accuracy after training with the given final alpha.
pub fn noise_trial_accuracy(data: &NoiseTrialData, cfg: &NoiseBenchConfig, alpha_final: f64, seed: u64) -> Result<f64> {
    let schedule = DenoiseConfig {
        alpha_final,
        ..cfg.schedule.clone()
    };
    let ssl = SslConfig { seed, ..cfg.ssl.clone() };
    let run = ssl_train(
        (&data.labeled.0, &data.labeled.1),
        (&data.pseudo.0, &data.pseudo.1),
        &ssl,
        &schedule,
        true,
    )?;
    Ok(run.classifier.accuracy(&data.test.0, &data.test.1))
}
