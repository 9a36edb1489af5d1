//! Command-line front end. Every stage reads and writes the documented file
//! formats, so stages can be run one at a time or chained by `pipeline`.

mod commands;
mod config;
mod pipeline;
mod provenance;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{RunConfig, TrialConfig};
pub use provenance::{provenance, sha256_file, sidecar_path};

use crate::error::{Error, Result};

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "GCNCLUSTER_SEED";

#[derive(Debug, Parser)]
#[command(name = "gcncluster", version, about = "GCN-based clustering of speaker embeddings")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stage (falls back to GCNCLUSTER_SEED, then the
    /// config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic meetings, labels and verification trials.
    Synth(SynthArgs),
    /// Build a cosine kNN affinity graph.
    Graph(GraphArgs),
    /// Train the proposal-quality (detection) GCN.
    TrainDetect(TrainArgs),
    /// Train the per-vertex membership (segmentation) GCN.
    TrainSegment(TrainArgs),
    /// Cluster with trained detection and segmentation models.
    Cluster(ClusterArgs),
    /// Run K-means, spectral clustering or AHC.
    Baseline(BaselineArgs),
    /// Pairwise precision/recall/F-score of a partition.
    EvalCluster(EvalClusterArgs),
    /// EER and minDCF of cosine-scored trials.
    EvalVerify(EvalVerifyArgs),
    /// Retrain a classifier on labeled plus pseudo-labeled data.
    SslRun(SslArgs),
    /// Synthesize, cluster, retrain and evaluate end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub meetings: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub emb: PathBuf,
    /// Build one graph per meeting instead of one over all samples.
    #[arg(long)]
    pub meetings: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub detector: PathBuf,
    #[arg(long)]
    pub segmenter: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub keep_threshold: Option<f64>,
    #[arg(long)]
    pub prob_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Kmeans,
    Spectral,
    Ahc,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[arg(long)]
    pub emb: PathBuf,
    /// Cluster each meeting separately; its `# speakers=` header supplies k
    /// when `--k` is absent.
    #[arg(long)]
    pub meetings: Option<PathBuf>,
    /// Affinity graph for spectral clustering; built from the embeddings
    /// when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// AHC stop threshold on cosine distance (instead of a cluster count).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalClusterArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Write the key=value report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalVerifyArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    /// Score projections through this retrained classifier.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub p_target: Option<f64>,
    #[arg(long)]
    pub c_miss: Option<f64>,
    #[arg(long)]
    pub c_fa: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SslArgs {
    #[arg(long)]
    pub labeled_emb: PathBuf,
    #[arg(long)]
    pub labeled_labels: PathBuf,
    /// Embeddings of the clustered (unlabeled) samples.
    #[arg(long)]
    pub emb: PathBuf,
    /// Partition of the unlabeled samples.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub meetings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log (CSV: iteration, alpha, loss).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub no_denoise: bool,
    #[arg(long)]
    pub alpha_final: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Output directory for every artifact and the final report.
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved configuration shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
}

impl Context {
    pub fn new(config_path: Option<PathBuf>, seed_flag: Option<u64>) -> Result<Self> {
        let mut cfg = match &config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        let seed = seed_flag.or(env_seed).unwrap_or(cfg.seed);
        cfg.seed = seed;
        cfg.synth.seed = seed;
        cfg.detector.seed = seed.wrapping_add(1);
        cfg.segmenter.seed = seed.wrapping_add(2);
        cfg.ssl.seed = seed.wrapping_add(3);
        cfg.baseline.seed = seed;
        cfg.validate()?;
        Ok(Self { cfg, seed, config_path })
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit status: 0 on success, 1 on a module error, 2 on
/// a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    let ctx = Context::new(cli.config, cli.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Graph(a) => commands::graph(&ctx, a),
        Command::TrainDetect(a) => commands::train(&ctx, a, commands::Network::Detector),
        Command::TrainSegment(a) => commands::train(&ctx, a, commands::Network::Segmenter),
        Command::Cluster(a) => commands::cluster(&ctx, a),
        Command::Baseline(a) => commands::baseline(&ctx, a),
        Command::EvalCluster(a) => commands::eval_cluster(&ctx, a).map(|r| print!("{}", r.to_text())),
        Command::EvalVerify(a) => commands::eval_verify(&ctx, a).map(|r| print!("{}", r.to_text())),
        Command::SslRun(a) => commands::ssl_run(&ctx, a),
        Command::Pipeline(a) => pipeline::pipeline(&ctx, a).map(|r| print!("{}", r.to_text())),
    })
}
