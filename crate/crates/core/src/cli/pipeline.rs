use std::path::Path;

use super::commands::{self, write_report, Network};
use super::{
    BaselineArgs, BaselineMethod, ClusterArgs, Context, EvalClusterArgs, EvalVerifyArgs, GraphArgs, PipelineArgs,
    SslArgs, TrainArgs,
};
use crate::data::SynthConfig;
use crate::error::Result;
use crate::metrics::Report;

fn prefixed(prefix: &str, r: Report) -> Report {
    Report {
        entries: r.entries.into_iter().map(|(k, v)| (format!("{prefix}{k}"), v)).collect(),
    }
}

/// Synthesize train/unlabeled/eval sets, build graphs, train both networks,
/// cluster, run the baselines, retrain with pseudo-labels and evaluate.
pub fn pipeline(ctx: &Context, a: &PipelineArgs) -> Result<Report> {
    let out = a.out.as_path();
    let cfg = &ctx.cfg;
    let set_seed = |k: u64| ctx.seed.wrapping_mul(1_000_003).wrapping_add(k);
    let sets = [
        ("train", cfg.train_meetings, 1),
        ("unlabeled", cfg.synth.n_meetings, 2),
        ("eval", cfg.eval_meetings, 3),
    ];
    for (name, meetings, k) in sets {
        let synth = SynthConfig {
            n_meetings: meetings,
            seed: set_seed(k),
            ..cfg.synth.clone()
        };
        commands::write_synth_set(ctx, &synth, &out.join(name), set_seed(k + 10))?;
    }
    let file = |set: &str, name: &str| out.join(set).join(name);
    for set in ["train", "unlabeled"] {
        commands::graph(
            ctx,
            &GraphArgs {
                emb: file(set, "embeddings.emb"),
                meetings: Some(file(set, "meetings.txt")),
                k: None,
                out: file(set, "graph.txt"),
            },
        )?;
    }
    let detector = out.join("detector.json");
    let segmenter = out.join("segmenter.json");
    for (net, path) in [(Network::Detector, &detector), (Network::Segmenter, &segmenter)] {
        commands::train(
            ctx,
            &TrainArgs {
                emb: file("train", "embeddings.emb"),
                labels: file("train", "labels.txt"),
                graph: file("train", "graph.txt"),
                out: path.clone(),
                epochs: None,
                learning_rate: None,
            },
            net,
        )?;
    }
    let partition = out.join("partition.txt");
    commands::cluster(
        ctx,
        &ClusterArgs {
            emb: file("unlabeled", "embeddings.emb"),
            graph: file("unlabeled", "graph.txt"),
            detector: detector.clone(),
            segmenter: segmenter.clone(),
            out: partition.clone(),
            keep_threshold: None,
            prob_threshold: None,
        },
    )?;
    let mut report = Report::default();
    let truth = file("unlabeled", "labels.txt");
    let eval_cluster = |pred: &Path| {
        commands::eval_cluster(
            ctx,
            &EvalClusterArgs {
                pred: pred.to_path_buf(),
                truth: truth.clone(),
                out: None,
                json: None,
            },
        )
    };
    report.extend(prefixed("gcn_", eval_cluster(&partition)?));
    for (method, name) in [
        (BaselineMethod::Kmeans, "kmeans"),
        (BaselineMethod::Spectral, "spectral"),
        (BaselineMethod::Ahc, "ahc"),
    ] {
        let path = out.join(format!("baseline_{name}.txt"));
        commands::baseline(
            ctx,
            &BaselineArgs {
                method,
                emb: file("unlabeled", "embeddings.emb"),
                meetings: Some(file("unlabeled", "meetings.txt")),
                graph: Some(file("unlabeled", "graph.txt")),
                k: None,
                threshold: None,
                out: path.clone(),
            },
        )?;
        report.extend(prefixed(&format!("{name}_"), eval_cluster(&path)?));
    }
    let eval_verify = |model: Option<&Path>| {
        commands::eval_verify(
            ctx,
            &EvalVerifyArgs {
                emb: file("eval", "embeddings.emb"),
                trials: file("eval", "trials.txt"),
                model: model.map(Path::to_path_buf),
                p_target: None,
                c_miss: None,
                c_fa: None,
                out: None,
                json: None,
            },
        )
    };
    report.extend(prefixed("raw_", eval_verify(None)?));
    let mut runs = vec![("plain", true)];
    if cfg.denoise_enabled {
        runs.push(("denoise", false));
    }
    for (name, no_denoise) in runs {
        let model = out.join(format!("classifier_{name}.json"));
        commands::ssl_run(
            ctx,
            &SslArgs {
                labeled_emb: file("train", "embeddings.emb"),
                labeled_labels: file("train", "labels.txt"),
                emb: file("unlabeled", "embeddings.emb"),
                pred: partition.clone(),
                meetings: file("unlabeled", "meetings.txt"),
                out: model.clone(),
                log: Some(out.join(format!("ssl_{name}.csv"))),
                no_denoise,
                alpha_final: None,
                lambda: None,
                iterations: None,
            },
        )?;
        report.extend(prefixed(&format!("{name}_"), eval_verify(Some(&model))?));
    }
    let meta = commands::meta_for(ctx, &[&partition, &detector, &segmenter])?;
    write_report(&report, &meta, Some(&out.join("report.txt")), Some(&out.join("report.json")))?;
    Ok(report)
}
