//! Active learning for multi-label annotation and single-word retrieval.
//!
//! The learning engine is a normalized continuous relevance model
//! ([`relevance`]): a lazy generative model over the labeled training set
//! that scores label words against continuous feature vectors. Sample
//! selection ([`selection`]) ranks unlabeled samples by a weighted sum of
//! posterior-gap uncertainty, within-cluster kernel density and diversity
//! against cluster representatives. Clusters come from BIC-driven X-Means
//! and are split as labels arrive whenever a cluster's empirical entropy
//! under a joint feature/label kernel exceeds the running worst value
//! ([`clustering`]). [`engine`] drives the rounds and records metrics.

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod math;
pub mod relevance;
pub mod selection;
pub mod synth;

pub use config::RunConfig;
pub use dataset::{Concept, Dataset, DatasetFormat, LabelSet, Sample, Splits};
pub use error::{Error, Result};
pub use relevance::RelevanceModel;
