//! Informativeness scoring of unlabeled samples and batch selection.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterState;
use crate::error::{Error, Result};
use crate::kernels::gaussian_kernel;
use crate::math::par_map;
use crate::relevance::RelevanceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoScore {
    pub sample_id: String,
    /// Index into the dataset's sample table.
    pub sample: usize,
    pub unct: f64,
    pub den: f64,
    pub div: f64,
    pub info: f64,
}

/// Reciprocal of the gap between the top posterior and the `(k+1)`-th,
/// with the gap clamped below at `epsilon`.
pub fn uncertainty_from_posteriors(posteriors: &[f64], k: usize, epsilon: f64) -> Result<f64> {
    if k == 0 || k >= posteriors.len() {
        return Err(Error::InvalidParameter(format!(
            "uncertainty needs 1 <= k < D (k = {k}, D = {})",
            posteriors.len()
        )));
    }
    let mut sorted = posteriors.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let gap = sorted[0] - sorted[k];
    Ok(1.0 / gap.max(epsilon))
}

pub fn uncertainty(
    features: &[f64],
    model: &RelevanceModel,
    k: usize,
    epsilon: f64,
) -> Result<f64> {
    uncertainty_from_posteriors(&model.word_posteriors(features)?, k, epsilon)
}

/// Within-cluster kernel density of every clustered sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    /// `p(x)` per sample index; `None` when the sample is not clustered.
    pub kde: Vec<Option<f64>>,
    pub global_max: f64,
}

/// `p(x) = 1/|C| sum_{x_i in C} K_gauss(x, x_i)` where `C` is `x`'s cluster
/// (the sum includes `x` itself).
pub fn cluster_kde(
    sample: usize,
    state: &ClusterState,
    features: &[Vec<f64>],
    sigma: f64,
) -> Result<f64> {
    let cid = state
        .cluster_of(sample)
        .ok_or_else(|| Error::Precondition(format!("sample #{sample} is not clustered")))?;
    let c = state
        .cluster(cid)
        .expect("assignment points at a live cluster");
    let mut sum = 0.0;
    for &m in &c.members {
        sum += gaussian_kernel(&features[sample], &features[m], sigma)?;
    }
    Ok(sum / c.size() as f64)
}

/// KDE of every clustered sample, each within its own cluster, and the
/// maximum over all of them.
pub fn density_table(
    state: &ClusterState,
    features: &[Vec<f64>],
    sigma: f64,
) -> Result<DensityTable> {
    let mut kde = vec![None; features.len()];
    let per_cluster = par_map(&state.clusters, |c| -> Result<Vec<(usize, f64)>> {
        c.members
            .iter()
            .map(|&i| {
                let mut sum = 0.0;
                for &m in &c.members {
                    sum += gaussian_kernel(&features[i], &features[m], sigma)?;
                }
                Ok((i, sum / c.size() as f64))
            })
            .collect()
    });
    let mut global_max = 0.0f64;
    for rows in per_cluster {
        for (i, p) in rows? {
            kde[i] = Some(p);
            global_max = global_max.max(p);
        }
    }
    Ok(DensityTable { kde, global_max })
}

/// `p(x) / max_i p(x_i)`, in (0, 1].
pub fn density(sample: usize, table: &DensityTable) -> Result<f64> {
    let p = table
        .kde
        .get(sample)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Precondition(format!("sample #{sample} is not clustered")))?;
    Ok(p / table.global_max)
}

/// One minus the largest cosine-normalized Gaussian similarity to any
/// representative. Gaussian self-similarity is 1, so the normalization is
/// the identity.
pub fn diversity(features: &[f64], representatives: &[&[f64]], sigma: f64) -> Result<f64> {
    if representatives.is_empty() {
        return Err(Error::Precondition("no cluster representatives".into()));
    }
    let mut best = 0.0f64;
    for rep in representatives {
        best = best.max(gaussian_kernel(features, rep, sigma)?);
    }
    Ok(1.0 - best)
}

/// `w0 * unct + w1 * den + w2 * div`.
pub fn informativeness(unct: f64, den: f64, div: f64, weights: [f64; 3]) -> f64 {
    weights[0] * unct + weights[1] * den + weights[2] * div
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringParams {
    pub annotation_length: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub weights: [f64; 3],
    pub rescale_uncertainty: bool,
}

/// Scores every sample in `unlabeled` against the current model and
/// clusters.
pub fn score_unlabeled(
    unlabeled: &[usize],
    ids: &[String],
    features: &[Vec<f64>],
    model: &RelevanceModel,
    state: &ClusterState,
    params: &ScoringParams,
) -> Result<Vec<InfoScore>> {
    let table = density_table(state, features, params.sigma)?;
    let reps: Vec<&[f64]> = state
        .representatives()
        .into_iter()
        .map(|r| features[r].as_slice())
        .collect();
    let parts = par_map(unlabeled, |&i| -> Result<(f64, f64, f64)> {
        Ok((
            uncertainty(
                &features[i],
                model,
                params.annotation_length,
                params.epsilon,
            )?,
            density(i, &table)?,
            diversity(&features[i], &reps, params.sigma)?,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let (lo, hi) = parts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    Ok(unlabeled
        .iter()
        .zip(parts)
        .map(|(&i, (unct, den, div))| {
            let u = if params.rescale_uncertainty {
                if hi > lo {
                    (unct - lo) / (hi - lo)
                } else {
                    0.0
                }
            } else {
                unct
            };
            InfoScore {
                sample_id: ids[i].clone(),
                sample: i,
                unct,
                den,
                div,
                info: informativeness(u, den, div, params.weights),
            }
        })
        .collect())
}

/// Top `k` scores by descending informativeness, ties by ascending id.
pub fn select_batch(scores: &[InfoScore], k: usize) -> Vec<usize> {
    let mut order: Vec<&InfoScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.info
            .total_cmp(&a.info)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    order.into_iter().take(k).map(|s| s.sample).collect()
}

/// Uniform draw of `min(k, |unlabeled|)` samples without replacement, in
/// draw order.
pub fn select_batch_random(unlabeled: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let n = unlabeled.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, n, k.min(n))
        .into_iter()
        .map(|i| unlabeled[i])
        .collect()
}
