//! Normalized continuous relevance model.
//!
//! A lazy generative model: every labeled training sample `J` is a mixture
//! component with uniform prior `1/|T|`. Words are drawn from a
//! Jelinek-Mercer mix of `J`'s own annotation, normalized by its length,
//! and the collection frequency:
//!
//! ```text
//! P(w|J)   = (1 - lambda) * [w in J] / m_J + lambda * N_w / sum_v N_v
//! P(r_i|J) = N(r_i; r_i^J, beta)
//! P(w, r)  = sum_J P(J) prod_w P(w|J) prod_i P(r_i|J)
//! ```
//!
//! All sums over `J` run in log space.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BETA_GRID, LAMBDA_GRID};
use crate::dataset::{LabelSet, Normalization};
use crate::error::{Error, Result};
use crate::evaluation::{annotation_precision, rank_by_score};
use crate::math::{log_sum_exp, par_map};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub id: String,
    pub features: Vec<f64>,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceModel {
    training: Vec<TrainingPoint>,
    lambda: f64,
    beta: f64,
    collection_counts: Vec<u64>,
    vocab_total: u64,
    vocabulary: Vec<String>,
    /// Feature dimensions entering the likelihood; zero-variance ones are
    /// dropped.
    active_dims: Vec<usize>,
    /// Z-score parameters for raw feature files scored against this model.
    normalization: Option<Normalization>,
}

impl RelevanceModel {
    /// Indexes `training` under smoothing parameters `lambda` and `beta`.
    pub fn train(
        training: Vec<TrainingPoint>,
        vocabulary: Vec<String>,
        lambda: f64,
        beta: f64,
    ) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::Precondition(
                "relevance model needs at least one labeled sample".into(),
            ));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda {lambda} outside [0, 1]"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let d = vocabulary.len();
        let m = training[0].features.len();
        let mut collection_counts = vec![0u64; d];
        for p in &training {
            if p.labels.len() != d {
                return Err(Error::dims(d, p.labels.len()));
            }
            if p.features.len() != m {
                return Err(Error::dims(m, p.features.len()));
            }
            for w in p.labels.positives() {
                collection_counts[w] += 1;
            }
        }
        let vocab_total = collection_counts.iter().sum();
        Ok(RelevanceModel {
            training,
            lambda,
            beta,
            collection_counts,
            vocab_total,
            vocabulary,
            active_dims: (0..m).collect(),
            normalization: None,
        })
    }

    /// Restricts the feature likelihood to the non-constant dimensions of
    /// `norm` and keeps it for scoring raw feature files later.
    pub fn with_normalization(mut self, norm: Normalization) -> Result<Self> {
        if norm.dim() != self.feature_dim() {
            return Err(Error::dims(self.feature_dim(), norm.dim()));
        }
        self.active_dims = norm.active_dims();
        self.normalization = Some(norm);
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn training(&self) -> &[TrainingPoint] {
        &self.training
    }

    pub fn training_size(&self) -> usize {
        self.training.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.training[0].features.len()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn collection_counts(&self) -> &[u64] {
        &self.collection_counts
    }

    fn background(&self, w: usize) -> f64 {
        if self.vocab_total == 0 {
            0.0
        } else {
            self.collection_counts[w] as f64 / self.vocab_total as f64
        }
    }

    /// `log P(w | J)` for training component `j`.
    pub fn log_word_given(&self, w: usize, j: usize) -> f64 {
        let labels = &self.training[j].labels;
        let m_j = labels.count();
        let own = if m_j > 0 && labels.contains(w) {
            1.0 / m_j as f64
        } else {
            0.0
        };
        ((1.0 - self.lambda) * own + self.lambda * self.background(w)).ln()
    }

    /// `log P(J) + sum_i log P(r_i | J)` for every training component.
    fn log_feature_terms(&self, features: &[f64]) -> Vec<f64> {
        let log_prior = -(self.training.len() as f64).ln();
        let norm_const = -0.5 * (2.0 * PI * self.beta).ln();
        self.training
            .iter()
            .map(|p| {
                let mut acc = log_prior;
                for &i in &self.active_dims {
                    let diff = features[i] - p.features[i];
                    acc += norm_const - diff * diff / (2.0 * self.beta);
                }
                acc
            })
            .collect()
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim() {
            return Err(Error::dims(self.feature_dim(), features.len()));
        }
        Ok(())
    }

    /// `log P(words, features)` by log-sum-exp over training components.
    pub fn log_joint(&self, words: &[usize], features: &[f64]) -> Result<f64> {
        self.check_features(features)?;
        if let Some(&w) = words.iter().find(|&&w| w >= self.vocab_size()) {
            return Err(Error::UnknownConcept(format!("#{w}")));
        }
        let terms: Vec<f64> = self
            .log_feature_terms(features)
            .into_iter()
            .enumerate()
            .map(|(j, base)| {
                base + words
                    .iter()
                    .map(|&w| self.log_word_given(w, j))
                    .sum::<f64>()
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// `P(w | features)` for every concept, normalized over the vocabulary.
    pub fn word_posteriors(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let base = self.log_feature_terms(features);
        let d = self.vocab_size();
        let mut terms = vec![0.0; base.len()];
        let log_joint: Vec<f64> = (0..d)
            .map(|w| {
                for (j, t) in terms.iter_mut().enumerate() {
                    *t = base[j] + self.log_word_given(w, j);
                }
                log_sum_exp(&terms)
            })
            .collect();
        let total = log_sum_exp(&log_joint);
        if total == f64::NEG_INFINITY {
            return Ok(vec![1.0 / d as f64; d]);
        }
        Ok(log_joint.iter().map(|lj| (lj - total).exp()).collect())
    }

    /// Top-`k` concepts by posterior; ties go to the lower vocabulary index.
    pub fn annotate(&self, features: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.vocab_size() {
            return Err(Error::InvalidParameter(format!(
                "annotation length {k} outside 1..={}",
                self.vocab_size()
            )));
        }
        let mut ranked: Vec<(usize, f64)> = self
            .word_posteriors(features)?
            .into_iter()
            .enumerate()
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Top-`t` candidates for a single-concept query, ranked by
    /// `P(concept | features)`; ties go to the smaller id.
    pub fn retrieve(
        &self,
        concept: usize,
        candidates: &[(&str, &[f64])],
        t: usize,
    ) -> Result<Vec<(String, f64)>> {
        if concept >= self.vocab_size() {
            return Err(Error::UnknownConcept(format!("#{concept}")));
        }
        if t > candidates.len() {
            return Err(Error::InvalidParameter(format!(
                "retrieval depth {t} exceeds {} candidates",
                candidates.len()
            )));
        }
        let scores = par_map(candidates, |(_, f)| {
            self.word_posteriors(f).map(|p| p[concept])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let ranked = rank_by_score(candidates.iter().zip(&scores).map(|((id, _), s)| (*id, *s)));
        Ok(ranked
            .into_iter()
            .take(t)
            .map(|(i, s)| (candidates[i].0.to_string(), s))
            .collect())
    }
}

/// Grid search for `(lambda, beta)` maximizing pooled annotation AP under
/// `folds`-fold cross-validation of `points`.
///
/// Ties keep the earlier grid point. With fewer than two points there is
/// nothing to hold out and `(0.5, 0.5)` is returned.
pub fn select_smoothing(
    points: &[TrainingPoint],
    vocabulary: &[String],
    normalization: Option<&Normalization>,
    annotation_length: usize,
    folds: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = points.len();
    if n < 2 || folds < 2 {
        return Ok((0.5, 0.5));
    }
    let folds = folds.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let k = annotation_length.min(vocabulary.len());

    let grid: Vec<(f64, f64)> = LAMBDA_GRID
        .iter()
        .flat_map(|&l| BETA_GRID.iter().map(move |&b| (l, b)))
        .collect();
    let scores = par_map(&grid, |&(lambda, beta)| -> Result<f64> {
        let mut predictions = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for f in 0..folds {
            let train: Vec<TrainingPoint> = (0..n)
                .filter(|&i| fold_of[i] != f)
                .map(|i| points[i].clone())
                .collect();
            let mut model = RelevanceModel::train(train, vocabulary.to_vec(), lambda, beta)?;
            if let Some(norm) = normalization {
                model = model.with_normalization(norm.clone())?;
            }
            for i in (0..n).filter(|&i| fold_of[i] == f) {
                let ranked = model.annotate(&points[i].features, k)?;
                predictions.push(ranked.into_iter().map(|(w, _)| w).collect());
                truth.push(&points[i].labels);
            }
        }
        Ok(annotation_precision(&predictions, &truth, vocabulary.len()).ap)
    });
    let mut best = (grid[0], f64::NEG_INFINITY);
    for (params, score) in grid.iter().zip(scores) {
        let score = score?;
        if score > best.1 {
            best = (*params, score);
        }
    }
    Ok(best.0)
}
