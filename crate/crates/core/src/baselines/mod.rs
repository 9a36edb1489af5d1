//! Comparison clusterers: K-means, spectral clustering and average-linkage
//! agglomerative clustering.

mod ahc;
mod kmeans;
mod spectral;

pub use ahc::{ahc, ahc_dendrogram, ahc_with_merges, cut_dendrogram, Merge};
pub use kmeans::{kmeans, kmeans_with_trace, KmeansRun};
pub use spectral::{jacobi_eigen, normalized_laplacian, spectral, spectral_from_eigen, SymmetricEigen};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// When agglomeration stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AhcStop {
    /// Stop once this many clusters remain.
    Clusters(usize),
    /// Stop before merging a pair whose linkage distance exceeds this.
    Distance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k: usize,
    pub stop: AhcStop,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            stop: AhcStop::Clusters(2),
            seed: 0,
            max_iters: 300,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        match self.stop {
            AhcStop::Clusters(0) => Err(Error::config("AHC cluster count must be at least 1")),
            AhcStop::Distance(t) if !t.is_finite() => Err(Error::config("AHC threshold must be finite")),
            _ => Ok(()),
        }
    }
}
