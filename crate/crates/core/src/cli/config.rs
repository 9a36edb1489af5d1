use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{AhcStop, BaselineConfig};
use crate::bench::BenchConfig;
use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::gcn::TrainConfig;
use crate::metrics::DcfParams;
use crate::pipeline::ClusterConfig;
use crate::ssl::{DenoiseConfig, SslConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            n_target: 500,
            n_nontarget: 2000,
        }
    }
}

/// Every tunable of a run, one section per stage. Missing fields take their
/// defaults; command-line flags override what is read here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Meetings to cluster (and pseudo-label).
    pub synth: SynthConfig,
    /// Labeled meetings used to train the detector and segmenter and as the
    /// clean part of retraining.
    pub train_meetings: usize,
    /// Meetings of unseen speakers used only for verification trials.
    pub eval_meetings: usize,
    pub knn_k: usize,
    pub cluster: ClusterConfig,
    pub detector: TrainConfig,
    pub segmenter: TrainConfig,
    pub baseline: BaselineConfig,
    pub ssl: SslConfig,
    pub denoise: DenoiseConfig,
    pub denoise_enabled: bool,
    pub trials: TrialConfig,
    pub dcf: DcfParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchConfig::default();
        Self {
            seed: 0,
            synth: SynthConfig {
                speakers_range: (3, 9),
                ..bench.synth
            },
            train_meetings: bench.train_meetings,
            eval_meetings: 10,
            knn_k: bench.knn_k,
            cluster: bench.cluster,
            detector: bench.detector,
            segmenter: bench.segmenter,
            baseline: BaselineConfig {
                stop: AhcStop::Distance(0.55),
                ..BaselineConfig::default()
            },
            ssl: SslConfig::default(),
            denoise: DenoiseConfig::default(),
            denoise_enabled: true,
            trials: TrialConfig::default(),
            dcf: DcfParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.detector.validate()?;
        self.segmenter.validate()?;
        self.baseline.validate()?;
        self.denoise.validate()?;
        if self.knn_k == 0 {
            return Err(Error::config("knn_k must be at least 1"));
        }
        if self.train_meetings == 0 || self.eval_meetings == 0 {
            return Err(Error::config("train_meetings and eval_meetings must be at least 1"));
        }
        if !(self.cluster.prob_threshold.is_finite() && !self.cluster.keep_threshold.is_nan()) {
            return Err(Error::config("cluster thresholds must be numbers"));
        }
        let p = &self.cluster.proposals;
        if !(0.0..1.0).contains(&p.tau0) || p.extra_tau0.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::config("proposal thresholds must lie in [0, 1)"));
        }
        if self.trials.n_target == 0 || self.trials.n_nontarget == 0 {
            return Err(Error::config("trial counts must be at least 1"));
        }
        Ok(())
    }
}
