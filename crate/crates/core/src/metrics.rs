//! Pairwise clustering metrics and speaker-verification metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, LabelSet, Partition, TrialList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub tp_pairs: u64,
    pub pred_pairs: u64,
    pub truth_pairs: u64,
}

fn pairs(count: u64) -> u64 {
    count * count.saturating_sub(1) / 2
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl PrfResult {
    pub fn from_counts(tp_pairs: u64, pred_pairs: u64, truth_pairs: u64) -> Self {
        let precision = ratio(tp_pairs, pred_pairs);
        let recall = ratio(tp_pairs, truth_pairs);
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_score,
            tp_pairs,
            pred_pairs,
            truth_pairs,
        }
    }

    /// Sums pair counts over independent groups (e.g. meetings).
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a PrfResult>) -> Self {
        let (mut tp, mut pred, mut truth) = (0, 0, 0);
        for p in parts {
            tp += p.tp_pairs;
            pred += p.pred_pairs;
            truth += p.truth_pairs;
        }
        Self::from_counts(tp, pred, truth)
    }
}

/// Pair counts from the cluster-size contingency table.
pub fn pairwise_prf(pred: &Partition, truth: &LabelSet) -> Result<PrfResult> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut pred_sizes = vec![0u64; pred.n_clusters()];
    let mut truth_sizes = vec![0u64; truth.num_classes()];
    for (i, &p) in pred.assignment().iter().enumerate() {
        let t = truth.get(i);
        *cells.entry((p, t)).or_default() += 1;
        pred_sizes[p] += 1;
        truth_sizes[t] += 1;
    }
    Ok(PrfResult::from_counts(
        cells.values().map(|&c| pairs(c)).sum(),
        pred_sizes.iter().map(|&c| pairs(c)).sum(),
        truth_sizes.iter().map(|&c| pairs(c)).sum(),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialScores {
    pub target_scores: Vec<f64>,
    pub nontarget_scores: Vec<f64>,
}

/// Dot products of the trial rows; embeddings are expected unit length.
pub fn cosine_scores(e: &EmbeddingSet, t: &TrialList) -> Result<TrialScores> {
    t.check_bounds(e.n())?;
    let mut out = TrialScores::default();
    for trial in t.trials() {
        let s = e.row(trial.enroll).dot(&e.row(trial.test));
        if trial.target {
            out.target_scores.push(s);
        } else {
            out.nontarget_scores.push(s);
        }
    }
    Ok(out)
}

/// `(threshold, miss rate, false-alarm rate)` at -inf, every midpoint
/// between distinct scores, and +inf. Misses are targets strictly below the
/// threshold; false alarms are nontargets at or above it.
pub fn operating_points(s: &TrialScores) -> Result<Vec<(f64, f64, f64)>> {
    if s.target_scores.is_empty() || s.nontarget_scores.is_empty() {
        return Err(Error::config("EER/minDCF need both target and nontarget scores"));
    }
    if s.target_scores.iter().chain(&s.nontarget_scores).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("trial scores must be finite".into()));
    }
    let mut tgt = s.target_scores.clone();
    let mut non = s.nontarget_scores.clone();
    tgt.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = tgt.iter().chain(&non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let (nt, nn) = (tgt.len() as f64, non.len() as f64);
    // Counts come from the scores on either side of each gap, never from the
    // midpoint itself, which can round onto a neighbor for adjacent floats.
    let point = |th: f64, below: usize, above: usize| (th, below as f64 / nt, above as f64 / nn);
    let mut points = vec![point(f64::NEG_INFINITY, 0, non.len())];
    for w in all.windows(2) {
        let below = tgt.partition_point(|&v| v <= w[0]);
        let above = non.len() - non.partition_point(|&v| v <= w[0]);
        points.push(point(w[0] + (w[1] - w[0]) / 2.0, below, above));
    }
    points.push(point(f64::INFINITY, tgt.len(), 0));
    Ok(points)
}

/// Equal error rate, linearly interpolated where miss and false-alarm rates
/// cross.
pub fn eer(s: &TrialScores) -> Result<f64> {
    let points = operating_points(s)?;
    for w in points.windows(2) {
        let (_, m1, f1) = w[0];
        let (_, m2, f2) = w[1];
        let (d1, d2) = (m1 - f1, m2 - f2);
        if d1 == 0.0 {
            return Ok(m1);
        }
        if d1 < 0.0 && d2 >= 0.0 {
            let t = d1 / (d1 - d2);
            return Ok(m1 + t * (m2 - m1));
        }
    }
    // The last point (+inf) always has miss 1, false alarm 0.
    Ok(points.last().map(|p| p.1).unwrap_or(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// Minimum detection cost normalized by the cost of the best trivial
/// decision.
pub fn min_dcf(s: &TrialScores, params: DcfParams) -> Result<f64> {
    let DcfParams { p_target, c_miss, c_fa } = params;
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(Error::Domain {
            value: p_target,
            domain: "p_target in (0, 1)",
        });
    }
    if !(c_miss > 0.0 && c_fa > 0.0) {
        return Err(Error::config("DCF costs must be positive"));
    }
    let norm = (c_miss * p_target).min(c_fa * (1.0 - p_target));
    let best = operating_points(s)?
        .into_iter()
        .map(|(_, miss, fa)| c_miss * p_target * miss + c_fa * (1.0 - p_target) * fa)
        .fold(f64::INFINITY, f64::min);
    Ok(best / norm)
}

/// Ordered named values rendered as `key=value` lines or JSON.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, f64)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|e| e.1)
    }

    pub fn prf(prefix: &str, r: &PrfResult) -> Self {
        let mut out = Report::default();
        out.push(format!("{prefix}precision"), r.precision);
        out.push(format!("{prefix}recall"), r.recall);
        out.push(format!("{prefix}f_score"), r.f_score);
        out
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v:.6}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("  {}: {v:.6}", serde_json::to_string(k).expect("string key")))
            .collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}
