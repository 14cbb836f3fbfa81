use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one active-learning run.
///
/// Optional fields are resolved at session start: `sigma` from the median
/// pairwise-distance heuristic, `lambda`/`beta` by cross-validation on the
/// initial labeled set, `k_max` as `ceil(sqrt(N))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Samples labeled per round (K).
    pub batch_size: usize,
    /// Concepts assigned per annotated sample (k).
    pub annotation_length: usize,
    /// Retrieval depth (t) for precision@t.
    pub retrieval_depth: usize,
    /// Gaussian kernel bandwidth.
    pub sigma: Option<f64>,
    /// Word smoothing weight of the relevance model.
    pub lambda: Option<f64>,
    /// Per-dimension feature variance of the relevance model.
    pub beta: Option<f64>,
    /// Weights of uncertainty, density and diversity.
    pub weights: [f64; 3],
    pub seed: u64,
    /// Lower clamp on the posterior gap in the uncertainty score.
    pub epsilon: f64,
    /// Use the cosine-normalized combined kernel inside the empirical entropy.
    pub normalize_entropy_kernel: bool,
    /// Min-max rescale uncertainty into [0, 1] per round before weighting.
    pub rescale_uncertainty: bool,
    pub k_min: usize,
    pub k_max: Option<usize>,
    /// Number of folds for the smoothing-parameter search.
    pub cv_folds: usize,
    /// k-means restarts per candidate K inside X-Means.
    pub kmeans_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch_size: 20,
            annotation_length: 3,
            retrieval_depth: 5,
            sigma: None,
            lambda: None,
            beta: None,
            weights: [1.0 / 3.0; 3],
            seed: 0,
            epsilon: 1e-9,
            normalize_entropy_kernel: false,
            rescale_uncertainty: false,
            k_min: 2,
            k_max: None,
            cv_folds: 10,
            kmeans_restarts: 5,
        }
    }
}

pub const LAMBDA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const BETA_GRID: [f64; 5] = [0.05, 0.1, 0.25, 0.5, 1.0];

impl RunConfig {
    /// Checks the config against a vocabulary of `vocab_size` concepts.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.annotation_length == 0 || self.annotation_length >= vocab_size {
            return bad(format!(
                "annotation_length must satisfy 1 <= k < D (k = {}, D = {vocab_size})",
                self.annotation_length
            ));
        }
        if self.retrieval_depth == 0 {
            return bad("retrieval_depth must be at least 1".into());
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return bad(format!("lambda must lie in [0, 1], got {l}"));
            }
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("beta must be positive, got {b}"));
            }
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights must be non-negative".into());
        }
        if self.weights.iter().sum::<f64>() <= 0.0 {
            return bad("at least one weight must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if self.k_min == 0 {
            return bad("k_min must be at least 1".into());
        }
        if let Some(k_max) = self.k_max {
            if k_max < self.k_min {
                return bad(format!("k_max ({k_max}) < k_min ({})", self.k_min));
            }
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be at least 1".into());
        }
        Ok(())
    }
}
