//! Seeded synthetic meeting generator.
//!
//! Every speaker gets a random centroid on the unit sphere; utterances are
//! the centroid plus Gaussian jitter, renormalized. Per-speaker spread can be
//! drawn from a range and stretched along a random axis so that clusters come
//! out unbalanced and elongated rather than round.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, LabelSet, MeetingIndex, Trial, TrialList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_meetings: usize,
    /// Inclusive range of speakers per meeting, within `[2, 10]`.
    pub speakers_range: (usize, usize),
    /// Inclusive range of utterances per speaker.
    pub utts_per_speaker_range: (usize, usize),
    pub d: usize,
    /// Per-dimension standard deviation of the jitter added to a centroid.
    pub intra_spread: f64,
    /// Each speaker's spread is `intra_spread` times a factor drawn
    /// uniformly from this range.
    pub spread_scale_range: (f64, f64),
    /// Standard deviation multiplier along one random direction per speaker.
    /// `1.0` gives isotropic jitter.
    pub anisotropy: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_meetings: 10,
            speakers_range: (2, 10),
            utts_per_speaker_range: (5, 20),
            d: 16,
            intra_spread: 0.1,
            spread_scale_range: (1.0, 1.0),
            anisotropy: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (smin, smax) = self.speakers_range;
        let (umin, umax) = self.utts_per_speaker_range;
        let (fmin, fmax) = self.spread_scale_range;
        if self.n_meetings == 0 {
            return Err(Error::config("n_meetings must be at least 1"));
        }
        if self.d < 2 {
            return Err(Error::config(format!("d must be at least 2, got {}", self.d)));
        }
        if smin < 2 || smax > 10 || smin > smax {
            return Err(Error::config(format!(
                "speakers_range ({smin}, {smax}) must lie within [2, 10]"
            )));
        }
        if umin == 0 || umin > umax {
            return Err(Error::config(format!(
                "utts_per_speaker_range ({umin}, {umax}) is invalid"
            )));
        }
        if !(self.intra_spread >= 0.0 && self.intra_spread.is_finite()) {
            return Err(Error::config("intra_spread must be finite and non-negative"));
        }
        if !(fmin > 0.0 && fmin <= fmax && fmax.is_finite()) {
            return Err(Error::config("spread_scale_range must be positive and ordered"));
        }
        if !(self.anisotropy >= 1.0 && self.anisotropy.is_finite()) {
            return Err(Error::config("anisotropy must be at least 1"));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal))
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    loop {
        let v = gaussian_vec(rng, d);
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Generates meetings of speakers with globally unique speaker ids.
/// Samples of one meeting occupy a contiguous index block, shuffled within it.
pub fn synth_meetings(cfg: &SynthConfig) -> Result<(EmbeddingSet, LabelSet, MeetingIndex)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d;
    let mut rows: Vec<Array1<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut meetings = Vec::with_capacity(cfg.n_meetings);
    let mut speakers = Vec::with_capacity(cfg.n_meetings);
    let mut next_speaker = 0usize;

    for _ in 0..cfg.n_meetings {
        let n_speakers = rng.random_range(cfg.speakers_range.0..=cfg.speakers_range.1);
        let mut utterances: Vec<(Array1<f64>, usize)> = Vec::new();
        for _ in 0..n_speakers {
            let speaker = next_speaker;
            next_speaker += 1;
            let centroid = unit_vec(&mut rng, d);
            let axis = unit_vec(&mut rng, d);
            let (fmin, fmax) = cfg.spread_scale_range;
            let scale = if fmin < fmax {
                rng.random_range(fmin..=fmax)
            } else {
                fmin
            };
            let spread = cfg.intra_spread * scale;
            let count = rng.random_range(cfg.utts_per_speaker_range.0..=cfg.utts_per_speaker_range.1);
            for _ in 0..count {
                if spread == 0.0 {
                    utterances.push((centroid.clone(), speaker));
                    continue;
                }
                let mut x = &centroid + &(gaussian_vec(&mut rng, d) * spread);
                let stretch: f64 = rng.sample(StandardNormal);
                x.scaled_add((cfg.anisotropy - 1.0) * spread * stretch, &axis);
                let norm = x.dot(&x).sqrt();
                utterances.push((x / norm, speaker));
            }
        }
        utterances.shuffle(&mut rng);
        let start = rows.len();
        for (x, speaker) in utterances {
            rows.push(x);
            labels.push(speaker);
        }
        meetings.push((start..rows.len()).collect());
        speakers.push(n_speakers);
    }

    let n = rows.len();
    let mut data = Array2::zeros((n, d));
    for (i, r) in rows.iter().enumerate() {
        data.row_mut(i).assign(r);
    }
    Ok((
        EmbeddingSet::new(data)?,
        LabelSet::new(labels)?,
        MeetingIndex::new(meetings, speakers)?,
    ))
}

/// Samples `n_target` same-class and `n_nontarget` different-class trials.
pub fn synth_trials(
    labels: &LabelSet,
    n_target: usize,
    n_nontarget: usize,
    seed: u64,
) -> Result<TrialList> {
    let classes = labels.classes();
    let eligible: Vec<&Vec<usize>> = classes.iter().filter(|c| c.len() >= 2).collect();
    if eligible.is_empty() || classes.len() < 2 {
        return Err(Error::config(
            "trials need a class with two samples and at least two classes",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_target + n_nontarget);
    for _ in 0..n_target {
        let class = eligible[rng.random_range(0..eligible.len())];
        let a = rng.random_range(0..class.len());
        let mut b = rng.random_range(0..class.len() - 1);
        if b >= a {
            b += 1;
        }
        trials.push(Trial {
            enroll: class[a],
            test: class[b],
            target: true,
        });
    }
    let n = labels.len();
    while trials.len() < n_target + n_nontarget {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if labels.get(a) != labels.get(b) {
            trials.push(Trial {
                enroll: a,
                test: b,
                target: false,
            });
        }
    }
    TrialList::new(trials)
}
