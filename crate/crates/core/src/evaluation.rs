//! Annotation and retrieval scores.
//!
//! Annotation AP is the unweighted mean over the vocabulary of per-concept
//! precision `TP / (TP + FP)`; a concept that is never predicted scores 0.
//! Retrieval AP is the mean over single-concept queries of precision at
//! depth `t`.

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetFile, LabelSet, SampleRecord};
use crate::error::{Error, Result};
use crate::math::par_map;
use crate::relevance::RelevanceModel;

/// A ground-truth sample presented to the evaluator.
#[derive(Debug, Clone, Copy)]
pub struct TestItem<'a> {
    pub id: &'a str,
    pub features: &'a [f64],
    pub labels: &'a LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationScore {
    pub per_concept_precision: Vec<f64>,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub per_concept_precision: Vec<f64>,
    pub ap: f64,
}

/// Per-concept precision of predicted concept lists against ground truth.
pub fn annotation_precision(
    predictions: &[Vec<usize>],
    truth: &[&LabelSet],
    vocab_size: usize,
) -> AnnotationScore {
    let mut tp = vec![0usize; vocab_size];
    let mut predicted = vec![0usize; vocab_size];
    for (pred, gt) in predictions.iter().zip(truth) {
        for &w in pred {
            predicted[w] += 1;
            if gt.contains(w) {
                tp[w] += 1;
            }
        }
    }
    let per_concept_precision: Vec<f64> = tp
        .iter()
        .zip(&predicted)
        .map(|(&t, &p)| if p == 0 { 0.0 } else { t as f64 / p as f64 })
        .collect();
    let ap = mean(&per_concept_precision);
    AnnotationScore {
        per_concept_precision,
        ap,
    }
}

pub fn evaluate_annotation(
    model: &RelevanceModel,
    test: &[TestItem<'_>],
    k: usize,
) -> Result<AnnotationScore> {
    if test.is_empty() {
        return Err(Error::Precondition("empty test set".into()));
    }
    let predictions = par_map(test, |item| {
        model
            .annotate(item.features, k)
            .map(|ranked| ranked.into_iter().map(|(w, _)| w).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let truth: Vec<&LabelSet> = test.iter().map(|t| t.labels).collect();
    Ok(annotation_precision(
        &predictions,
        &truth,
        model.vocab_size(),
    ))
}

pub fn evaluate_retrieval(
    model: &RelevanceModel,
    test: &[TestItem<'_>],
    t: usize,
) -> Result<RetrievalScore> {
    if t == 0 || t > test.len() {
        return Err(Error::InvalidParameter(format!(
            "retrieval depth {t} exceeds the {} test samples",
            test.len()
        )));
    }
    // One posterior vector per test sample serves every query.
    let posteriors = par_map(test, |item| model.word_posteriors(item.features))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let d = model.vocab_size();
    let per_concept_precision: Vec<f64> = (0..d)
        .map(|w| {
            let ranked = rank_by_score(test.iter().zip(&posteriors).map(|(it, p)| (it.id, p[w])));
            let hits = ranked[..t]
                .iter()
                .filter(|(i, _)| test[*i].labels.contains(w))
                .count();
            hits as f64 / t as f64
        })
        .collect();
    let ap = mean(&per_concept_precision);
    Ok(RetrievalScore {
        per_concept_precision,
        ap,
    })
}

/// Scores of a saved model on the test split of a raw dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub test_count: usize,
    pub annotation_ap: f64,
    pub retrieval_ap: f64,
    pub per_concept_precision: Vec<f64>,
    pub retrieval_per_concept: Vec<f64>,
}

/// Evaluates `model` on the test split of `record` (every labeled sample
/// when the split is empty). Raw features pass through the model's stored
/// normalization; concept names must belong to the model's vocabulary.
pub fn evaluate_record(
    model: &RelevanceModel,
    record: &DatasetFile,
    k: usize,
    t: usize,
) -> Result<EvaluationReport> {
    if record.feature_dim != model.feature_dim() {
        return Err(Error::dims(model.feature_dim(), record.feature_dim));
    }
    let vocab = model.vocabulary();
    let chosen: Vec<&SampleRecord> = if record.splits.test.is_empty() {
        record
            .samples
            .iter()
            .filter(|s| s.labels.is_some())
            .collect()
    } else {
        record
            .splits
            .test
            .iter()
            .map(|id| {
                record
                    .samples
                    .iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| Error::UnknownSample(id.clone()))
            })
            .collect::<Result<_>>()?
    };
    let mut prepared: Vec<(String, Vec<f64>, LabelSet)> = Vec::with_capacity(chosen.len());
    for s in chosen {
        let names = s.labels.as_ref().ok_or_else(|| {
            Error::SplitViolation(format!("test sample `{}` has no labels", s.id))
        })?;
        let mut labels = LabelSet::empty(vocab.len());
        for n in names {
            let d = vocab
                .iter()
                .position(|v| v == n)
                .ok_or_else(|| Error::UnknownConcept(n.clone()))?;
            labels.insert(d);
        }
        if s.features.len() != record.feature_dim {
            return Err(Error::dims(record.feature_dim, s.features.len()));
        }
        let features = match model.normalization() {
            Some(norm) => norm.apply(&s.features)?,
            None => s.features.clone(),
        };
        prepared.push((s.id.clone(), features, labels));
    }
    let items: Vec<TestItem<'_>> = prepared
        .iter()
        .map(|(id, f, l)| TestItem {
            id,
            features: f,
            labels: l,
        })
        .collect();
    let annotation = evaluate_annotation(model, &items, k)?;
    let retrieval = evaluate_retrieval(model, &items, t)?;
    Ok(EvaluationReport {
        test_count: items.len(),
        annotation_ap: annotation.ap,
        retrieval_ap: retrieval.ap,
        per_concept_precision: annotation.per_concept_precision,
        retrieval_per_concept: retrieval.per_concept_precision,
    })
}

/// Positions of `(id, score)` pairs sorted by descending score, then
/// ascending id.
pub fn rank_by_score<'a, I>(items: I) -> Vec<(usize, f64)>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let items: Vec<(&str, f64)> = items.into_iter().collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .1
            .total_cmp(&items[a].1)
            .then_with(|| items[a].0.cmp(items[b].0))
    });
    order.into_iter().map(|i| (i, items[i].1)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
