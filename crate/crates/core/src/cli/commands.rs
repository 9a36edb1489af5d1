use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::provenance::{provenance, write_sidecar};
use super::{BaselineArgs, BaselineMethod, ClusterArgs, Context, EvalClusterArgs, EvalVerifyArgs, GraphArgs, SslArgs, SynthArgs, TrainArgs};
use crate::baselines::{ahc, kmeans, spectral, AhcStop};
use crate::data::{
    load_embeddings, load_labels, load_meetings, load_partition, save_embeddings, save_labels, save_meetings,
    save_partition, save_trials, synth_meetings, synth_trials, EmbeddingSet, LabelSet, MeetingIndex, Metadata,
    Partition, SynthConfig,
};
use crate::error::{Error, Result};
use crate::gcn::{GcnModel, HeadKind};
use crate::graph::{build_block_knn_graph, build_knn_graph, AffinityGraph};
use crate::metrics::{cosine_scores, eer, min_dcf, pairwise_prf, DcfParams, Report};
use crate::pipeline::{self, train_detector, train_segmenter, TrainingGraph};
use crate::proposals::generate_proposals;
use crate::ssl::{assign_pseudo_labels, ssl_train, SoftClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Detector,
    Segmenter,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Seed, hash of the resolved configuration, then the config file (when one
/// was given) and the listed inputs.
pub(super) fn meta_for(ctx: &Context, inputs: &[&Path]) -> Result<Metadata> {
    let mut all: Vec<&Path> = ctx.config_path.iter().map(PathBuf::as_path).collect();
    all.extend_from_slice(inputs);
    let mut meta = provenance(ctx.seed, &all)?;
    let resolved = serde_json::to_string(&ctx.cfg).map_err(|e| Error::config(format!("config: {e}")))?;
    meta.insert(1, ("config.sha256".into(), hex::encode(Sha256::digest(resolved.as_bytes()))));
    Ok(meta)
}

pub fn unit_embeddings(path: &Path) -> Result<EmbeddingSet> {
    load_embeddings(path)?.l2_normalize()
}

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(Error::Shape(format!("{what} covers {got} samples but there are {n} embeddings")));
    }
    Ok(())
}

pub fn write_synth_set(ctx: &Context, synth: &SynthConfig, out: &Path, trials_seed: u64) -> Result<()> {
    create_dir(out)?;
    let (e, labels, meetings) = synth_meetings(synth)?;
    let trials = synth_trials(&labels, ctx.cfg.trials.n_target, ctx.cfg.trials.n_nontarget, trials_seed)?;
    let meta = meta_for(ctx, &[])?;
    let files = [
        out.join("embeddings.emb"),
        out.join("labels.txt"),
        out.join("meetings.txt"),
        out.join("trials.txt"),
    ];
    save_embeddings(&e, &files[0])?;
    save_labels(&labels, &files[1])?;
    save_meetings(&meetings, &files[2])?;
    save_trials(&trials, &files[3])?;
    for f in &files {
        write_sidecar(f, &meta)?;
    }
    Ok(())
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let mut synth = ctx.cfg.synth.clone();
    if let Some(m) = a.meetings {
        synth.n_meetings = m;
    }
    write_synth_set(ctx, &synth, &a.out, ctx.seed)
}

pub fn graph(ctx: &Context, a: &GraphArgs) -> Result<()> {
    let e = unit_embeddings(&a.emb)?;
    let k = a.k.unwrap_or(ctx.cfg.knn_k);
    let g = match &a.meetings {
        Some(path) => {
            let m = load_meetings(path)?;
            m.check_cover(e.n())?;
            build_block_knn_graph(&e, m.meetings(), k)?
        }
        None => build_knn_graph(&e, k.min(e.n().saturating_sub(1)).max(1))?,
    };
    let mut inputs = vec![a.emb.as_path()];
    inputs.extend(a.meetings.as_deref());
    g.save(&meta_for(ctx, &inputs)?, &a.out)
}

pub fn train(ctx: &Context, a: &TrainArgs, net: Network) -> Result<()> {
    let e = unit_embeddings(&a.emb)?;
    let truth = load_labels(&a.labels)?;
    let g = AffinityGraph::load(&a.graph)?;
    check_len("labels", truth.len(), e.n())?;
    check_len("graph", g.n(), e.n())?;
    let proposals = generate_proposals(&g, &e, &ctx.cfg.cluster.proposals)?;
    let groups = [TrainingGraph {
        embeddings: &e,
        graph: &g,
        truth: &truth,
        proposals: &proposals,
    }];
    let mut cfg = match net {
        Network::Detector => ctx.cfg.detector.clone(),
        Network::Segmenter => ctx.cfg.segmenter.clone(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    let (model, _) = match net {
        Network::Detector => train_detector(&groups, &cfg)?,
        Network::Segmenter => train_segmenter(&groups, &cfg)?,
    };
    let mut doc = model.to_document();
    doc.metadata = meta_for(ctx, &[&a.emb, &a.labels, &a.graph])?;
    doc.save(&a.out)
}

pub fn cluster(ctx: &Context, a: &ClusterArgs) -> Result<()> {
    let e = unit_embeddings(&a.emb)?;
    let g = AffinityGraph::load(&a.graph)?;
    check_len("graph", g.n(), e.n())?;
    let detector = GcnModel::load(&a.detector)?;
    let segmenter = GcnModel::load(&a.segmenter)?;
    detector.expect_head(HeadKind::MeanPool)?;
    segmenter.expect_head(HeadKind::VertexSigmoid)?;
    let mut cfg = ctx.cfg.cluster.clone();
    if let Some(v) = a.keep_threshold {
        cfg.keep_threshold = v;
    }
    if let Some(v) = a.prob_threshold {
        cfg.prob_threshold = v;
    }
    let p = pipeline::cluster(&e, &g, &detector, &segmenter, &cfg)?;
    save_partition(&p, &meta_for(ctx, &[&a.emb, &a.graph, &a.detector, &a.segmenter])?, &a.out)
}

/// Clusters each group on its own and numbers clusters group after group.
fn per_group<F>(n: usize, groups: &[Vec<usize>], run: F) -> Result<Partition>
where
    F: Fn(usize, &[usize]) -> Result<Partition>,
{
    let mut raw = vec![usize::MAX; n];
    let mut base = 0;
    for (gi, members) in groups.iter().enumerate() {
        let p = run(gi, members)?;
        for (j, &i) in members.iter().enumerate() {
            raw[i] = base + p.get(j);
        }
        base += p.n_clusters();
    }
    Ok(Partition::from_raw(&raw))
}

pub fn baseline(ctx: &Context, a: &BaselineArgs) -> Result<()> {
    let e = unit_embeddings(&a.emb)?;
    let n = e.n();
    let meetings = a.meetings.as_deref().map(load_meetings).transpose()?;
    let groups: Vec<Vec<usize>> = match &meetings {
        Some(m) => {
            m.check_cover(n)?;
            m.meetings().to_vec()
        }
        None => vec![(0..n).collect()],
    };
    let graph = a.graph.as_deref().map(AffinityGraph::load).transpose()?;
    if let Some(g) = &graph {
        check_len("graph", g.n(), n)?;
    }
    let base = &ctx.cfg.baseline;
    let k_for = |gi: usize, size: usize| {
        let k = a
            .k
            .or_else(|| meetings.as_ref().and_then(|m| m.speakers_per_meeting().get(gi).copied()))
            .unwrap_or(base.k);
        k.clamp(1, size)
    };
    let stop = match (a.threshold, a.k) {
        (Some(t), _) => AhcStop::Distance(t),
        (None, Some(k)) => AhcStop::Clusters(k),
        (None, None) => base.stop,
    };
    let p = per_group(n, &groups, |gi, members| {
        let sub = e.select(members)?;
        match a.method {
            BaselineMethod::Kmeans => kmeans(&sub, k_for(gi, members.len()), base.seed, base.max_iters),
            BaselineMethod::Spectral => {
                if members.len() == 1 {
                    return Partition::new(vec![0]);
                }
                let g = match &graph {
                    Some(g) => g.subgraph(members)?.graph,
                    None => build_knn_graph(&sub, ctx.cfg.knn_k.min(members.len() - 1))?,
                };
                spectral(&g, k_for(gi, members.len()), base.seed)
            }
            BaselineMethod::Ahc => ahc(&sub, stop),
        }
    })?;
    let mut inputs = vec![a.emb.as_path()];
    inputs.extend(a.meetings.as_deref());
    inputs.extend(a.graph.as_deref());
    let mut meta = meta_for(ctx, &inputs)?;
    meta.push((
        "method".into(),
        format!("{:?}", a.method).to_lowercase(),
    ));
    save_partition(&p, &meta, &a.out)
}

/// Writes a report's text and JSON forms, each with a provenance sidecar.
pub fn write_report(report: &Report, meta: &Metadata, text: Option<&Path>, json: Option<&Path>) -> Result<()> {
    if let Some(path) = text {
        write_file(path, &report.to_text())?;
        write_sidecar(path, meta)?;
    }
    if let Some(path) = json {
        write_file(path, &report.to_json())?;
        write_sidecar(path, meta)?;
    }
    Ok(())
}

pub fn cluster_report(pred: &Partition, truth: &LabelSet) -> Result<Report> {
    let prf = pairwise_prf(pred, truth)?;
    let mut r = Report::prf("", &prf);
    r.push("clusters", pred.n_clusters() as f64);
    r.push("classes", truth.num_classes() as f64);
    Ok(r)
}

pub fn eval_cluster(ctx: &Context, a: &EvalClusterArgs) -> Result<Report> {
    let pred = load_partition(&a.pred)?;
    let truth = load_labels(&a.truth)?;
    let report = cluster_report(&pred, &truth)?;
    write_report(&report, &meta_for(ctx, &[&a.pred, &a.truth])?, a.out.as_deref(), a.json.as_deref())?;
    Ok(report)
}

pub fn verify_report(e: &EmbeddingSet, trials: &crate::data::TrialList, dcf: DcfParams) -> Result<Report> {
    let scores = cosine_scores(e, trials)?;
    let mut r = Report::default();
    r.push("eer", eer(&scores)?);
    r.push("min_dcf", min_dcf(&scores, dcf)?);
    Ok(r)
}

pub fn eval_verify(ctx: &Context, a: &EvalVerifyArgs) -> Result<Report> {
    let mut e = unit_embeddings(&a.emb)?;
    if let Some(path) = &a.model {
        e = SoftClassifier::load(path)?.embed(&e)?;
    }
    let trials = crate::data::load_trials(&a.trials)?;
    let mut dcf = ctx.cfg.dcf;
    if let Some(v) = a.p_target {
        dcf.p_target = v;
    }
    if let Some(v) = a.c_miss {
        dcf.c_miss = v;
    }
    if let Some(v) = a.c_fa {
        dcf.c_fa = v;
    }
    let report = verify_report(&e, &trials, dcf)?;
    let mut inputs = vec![a.emb.as_path(), a.trials.as_path()];
    inputs.extend(a.model.as_deref());
    write_report(&report, &meta_for(ctx, &inputs)?, a.out.as_deref(), a.json.as_deref())?;
    Ok(report)
}

/// Splits a global partition into one partition per meeting.
pub fn meeting_partitions(pred: &Partition, m: &MeetingIndex) -> Vec<Partition> {
    m.meetings()
        .iter()
        .map(|members| {
            let raw: Vec<usize> = members.iter().map(|&i| pred.get(i)).collect();
            Partition::from_raw(&raw)
        })
        .collect()
}

pub fn ssl_run(ctx: &Context, a: &SslArgs) -> Result<()> {
    let le = unit_embeddings(&a.labeled_emb)?;
    let ll = load_labels(&a.labeled_labels)?;
    check_len("labeled labels", ll.len(), le.n())?;
    let ue = unit_embeddings(&a.emb)?;
    let pred = load_partition(&a.pred)?;
    check_len("partition", pred.len(), ue.n())?;
    let m = load_meetings(&a.meetings)?;
    m.check_cover(ue.n())?;
    let pseudo = assign_pseudo_labels(&meeting_partitions(&pred, &m), &m, ll.num_classes())?;
    let mut schedule = ctx.cfg.denoise.clone();
    if let Some(v) = a.alpha_final {
        schedule.alpha_final = v;
    }
    if let Some(v) = a.lambda {
        schedule.lambda = v;
    }
    if let Some(v) = a.iterations {
        schedule.iterations = v;
    }
    let denoise = ctx.cfg.denoise_enabled && !a.no_denoise;
    let run = ssl_train((&le, &ll), (&ue, &pseudo), &ctx.cfg.ssl, &schedule, denoise)?;
    let meta = meta_for(ctx, &[&a.labeled_emb, &a.labeled_labels, &a.emb, &a.pred, &a.meetings])?;
    let mut doc = run.classifier.to_document();
    doc.metadata = meta.clone();
    doc.save(&a.out)?;
    if let Some(log) = &a.log {
        write_file(log, &run.log_csv())?;
        write_sidecar(log, &meta)?;
    }
    Ok(())
}
