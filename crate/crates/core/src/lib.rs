//! Clustering of fixed-dimension embeddings with graph convolutional
//! networks, pseudo-label retraining with a noise-robust loss, classical
//! baselines, and clustering/verification metrics.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod proposals;
pub mod ssl;

pub use error::{Error, Result};
