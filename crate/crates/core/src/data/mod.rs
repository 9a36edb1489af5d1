//! Core data types: embedding matrices, label sets, meeting indices, trial
//! lists and partitions, plus synthetic generation and file I/O.

mod io;
mod synth;

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub use io::{
    format_sig, load_embeddings, load_labels, load_meetings, load_partition, load_trials,
    save_embeddings, save_labels, save_meetings, save_partition, save_trials, Metadata,
};
pub use synth::{synth_meetings, synth_trials, SynthConfig};

/// An `n x d` matrix of embedding vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!(
                "embedding set must be at least 1x1, got {n}x{d}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {i} has {} columns, expected {d}",
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingSet> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Bounds {
                index: bad,
                len: self.n(),
            });
        }
        EmbeddingSet::new(self.data.select(Axis(0), indices))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<EmbeddingSet> {
        let mut data = self.data.clone();
        for (i, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!("row {i} has zero norm")));
            }
            row.mapv_inplace(|v| v / norm);
        }
        Ok(Self { data })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.data
            .axis_iter(Axis(0))
            .all(|r| (r.dot(&r).sqrt() - 1.0).abs() <= tol)
    }
}

/// Free-function form of [`EmbeddingSet::l2_normalize`].
pub fn l2_normalize(e: &EmbeddingSet) -> Result<EmbeddingSet> {
    e.l2_normalize()
}

/// Dense class ids for each sample, with an optional labeled/unlabeled mask
/// and the external token for every class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    mask: Option<Vec<bool>>,
    names: Vec<String>,
}

impl LabelSet {
    /// Class ids must be contiguous from 0 (every id below the maximum used).
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; num_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "class ids are not contiguous: id {missing} unused below max {}",
                num_classes - 1
            )));
        }
        let names = (0..num_classes).map(|c| c.to_string()).collect();
        Ok(Self {
            labels,
            mask: None,
            names,
        })
    }

    /// Maps arbitrary ids to dense ids in order of first appearance. The
    /// original ids become the class names.
    pub fn compact(raw: &[usize]) -> Self {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut names = Vec::new();
        let labels = raw
            .iter()
            .map(|&r| {
                *map.entry(r).or_insert_with(|| {
                    names.push(r.to_string());
                    names.len() - 1
                })
            })
            .collect();
        Self {
            labels,
            mask: None,
            names,
        }
    }

    /// Maps string tokens to dense ids. Tokens that are all integers forming
    /// exactly `0..C` keep their numeric value; anything else is numbered by
    /// first appearance.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let numeric: Option<Vec<usize>> = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                // reject forms like "01" or "+1" that would not print back identically
                t.parse::<usize>().ok().filter(|v| v.to_string() == t)
            })
            .collect();
        if let Some(ids) = numeric {
            if let Ok(set) = LabelSet::new(ids) {
                return set;
            }
        }
        let mut map: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let labels = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                *map.entry(t).or_insert_with(|| {
                    names.push(t.to_string());
                    names.len() - 1
                })
            })
            .collect();
        Self {
            labels,
            mask: None,
            names,
        }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "mask length {} != label count {}",
                mask.len(),
                self.labels.len()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes() {
            return Err(Error::Shape(format!(
                "{} names for {} classes",
                names.len(),
                self.num_classes()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    /// Labels of the given samples, re-densified; class names carry over.
    pub fn select(&self, indices: &[usize]) -> Result<LabelSet> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Bounds {
                index: bad,
                len: self.len(),
            });
        }
        let raw: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        let mut out = LabelSet::compact(&raw);
        out.names = out
            .names
            .iter()
            .map(|n| self.names[n.parse::<usize>().expect("compact names are ids")].clone())
            .collect();
        if let Some(mask) = &self.mask {
            out.mask = Some(indices.iter().map(|&i| mask[i]).collect());
        }
        Ok(out)
    }

    /// Sample indices grouped by class id.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

/// Disjoint groups of sample indices, one per simulated meeting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeetingIndex {
    meetings: Vec<Vec<usize>>,
    speakers_per_meeting: Vec<usize>,
}

impl MeetingIndex {
    /// `speakers_per_meeting` may be empty when the counts are unknown.
    pub fn new(meetings: Vec<Vec<usize>>, speakers_per_meeting: Vec<usize>) -> Result<Self> {
        if !speakers_per_meeting.is_empty() {
            if speakers_per_meeting.len() != meetings.len() {
                return Err(Error::Shape(format!(
                    "{} speaker counts for {} meetings",
                    speakers_per_meeting.len(),
                    meetings.len()
                )));
            }
            if let Some(&bad) = speakers_per_meeting
                .iter()
                .find(|&&s| !(2..=10).contains(&s))
            {
                return Err(Error::config(format!(
                    "speaker count {bad} outside [2, 10]"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (m, meeting) in meetings.iter().enumerate() {
            for &i in meeting {
                if !seen.insert(i) {
                    return Err(Error::config(format!(
                        "sample {i} appears twice (second time in meeting {m})"
                    )));
                }
            }
        }
        Ok(Self {
            meetings,
            speakers_per_meeting,
        })
    }

    pub fn meetings(&self) -> &[Vec<usize>] {
        &self.meetings
    }

    pub fn speakers_per_meeting(&self) -> &[usize] {
        &self.speakers_per_meeting
    }

    pub fn len(&self) -> usize {
        self.meetings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meetings.is_empty()
    }

    /// Checks that the meetings cover exactly `0..n`.
    pub fn check_cover(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.meetings.iter().flatten() {
            if i >= n {
                return Err(Error::Bounds { index: i, len: n });
            }
            seen[i] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(missing) => Err(Error::config(format!(
                "sample {missing} belongs to no meeting"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub enroll: usize,
    pub test: usize,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialList {
    trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if !trials.iter().any(|t| t.target) || trials.iter().all(|t| t.target) {
            return Err(Error::config(
                "trial list needs at least one target and one nontarget trial",
            ));
        }
        Ok(Self { trials })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        for t in &self.trials {
            for index in [t.enroll, t.test] {
                if index >= n {
                    return Err(Error::Bounds { index, len: n });
                }
            }
        }
        Ok(())
    }
}

/// Total assignment of sample indices to dense cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Cluster ids must already be dense from 0.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; n_clusters];
        for &c in &assignment {
            used[c] = true;
        }
        if let Some(gap) = used.iter().position(|u| !u) {
            return Err(Error::config(format!("cluster id {gap} is unused")));
        }
        Ok(Self {
            assignment,
            n_clusters,
        })
    }

    /// Renumbers arbitrary ids densely in order of first appearance.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map = HashMap::new();
        let assignment: Vec<usize> = raw
            .iter()
            .map(|&r| {
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            n_clusters: map.len(),
            assignment,
        }
    }

    /// Builds a partition from disjoint clusters covering `0..n`. Cluster ids
    /// follow the order of `clusters`.
    pub fn from_clusters(clusters: &[Vec<usize>], n: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(Error::Bounds { index: i, len: n });
                }
                if assignment[i] != usize::MAX {
                    return Err(Error::config(format!("sample {i} in two clusters")));
                }
                assignment[i] = c;
            }
        }
        if let Some(i) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(Error::config(format!("sample {i} is unassigned")));
        }
        Partition::new(assignment)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn get(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn to_labels(&self) -> LabelSet {
        LabelSet::new(self.assignment.clone()).expect("partition ids are dense")
    }
}
