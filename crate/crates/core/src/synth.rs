//! Gaussian-blob datasets for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetFile, SampleRecord, SplitsRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub samples_per_cluster: usize,
    pub vocab_size: usize,
    pub feature_dim: usize,
    /// Probability of flipping each concept bit of each sample.
    pub label_noise: f64,
    pub seed: u64,
    /// Standard deviation of each blob.
    pub blob_std: f64,
    /// Blob centers are drawn uniformly from `[-spread, spread]^M`.
    pub center_spread: f64,
    /// Defaults to 20% of the samples.
    pub test_size: Option<usize>,
    /// Defaults to `max(D, 10%)` of the samples.
    pub initial_labeled: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clusters: 3,
            samples_per_cluster: 20,
            vocab_size: 5,
            feature_dim: 2,
            label_noise: 0.0,
            seed: 0,
            blob_std: 1.0,
            center_spread: 8.0,
            test_size: None,
            initial_labeled: None,
        }
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    Dataset::from_record(generate_record(spec)?)
}

pub fn generate_record(spec: &SynthSpec) -> Result<DatasetFile> {
    let pre = |m: &str| Err(Error::Precondition(m.to_string()));
    if spec.n_clusters == 0 || spec.samples_per_cluster == 0 {
        return pre("cluster and sample counts must be positive");
    }
    if spec.vocab_size == 0 || spec.feature_dim == 0 {
        return pre("vocabulary size and feature dimension must be positive");
    }
    if spec.vocab_size > 3 * spec.n_clusters {
        return pre("each blob carries at most 3 concepts, so D must be <= 3 * n_clusters");
    }
    if !(0.0..=1.0).contains(&spec.label_noise) {
        return pre("label_noise must lie in [0, 1]");
    }
    if !(spec.blob_std > 0.0) {
        return pre("blob_std must be positive");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.vocab_size;
    let m = spec.feature_dim;

    // Concept d is guaranteed to blob d mod n_clusters; blobs then top up to a
    // random size in 1..=3.
    let mut blob_concepts: Vec<Vec<usize>> = vec![Vec::new(); spec.n_clusters];
    for c in 0..d {
        blob_concepts[c % spec.n_clusters].push(c);
    }
    for concepts in &mut blob_concepts {
        let target = rng.gen_range(1..=3usize).min(d).max(concepts.len());
        while concepts.len() < target {
            let c = rng.gen_range(0..d);
            if !concepts.contains(&c) {
                concepts.push(c);
            }
        }
        concepts.sort_unstable();
    }

    let noise =
        Normal::new(0.0, spec.blob_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let width = (spec.n_clusters * spec.samples_per_cluster)
        .to_string()
        .len();
    let mut samples = Vec::with_capacity(spec.n_clusters * spec.samples_per_cluster);
    for concepts in &blob_concepts {
        let center: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(-spec.center_spread..=spec.center_spread))
            .collect();
        for _ in 0..spec.samples_per_cluster {
            let features = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            let mut bits: Vec<bool> = (0..d).map(|c| concepts.contains(&c)).collect();
            if spec.label_noise > 0.0 {
                for bit in &mut bits {
                    if rng.gen_bool(spec.label_noise) {
                        *bit = !*bit;
                    }
                }
            }
            let labels = bits
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(c, _)| concept_name(c))
                .collect();
            samples.push(SampleRecord {
                id: format!("s{:0width$}", samples.len(), width = width),
                features,
                labels: Some(labels),
            });
        }
    }

    let n = samples.len();
    let n_test = spec.test_size.unwrap_or((n as f64 * 0.2).round() as usize);
    let n_init = spec
        .initial_labeled
        .unwrap_or_else(|| d.max((n as f64 * 0.1).round() as usize));
    if n_test + n_init > n {
        return pre("test and initial labeled sizes exceed the sample count");
    }

    // Cover every concept in the initial labeled set, then fill at random.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let has = |i: usize, c: usize| {
        samples[i]
            .labels
            .as_ref()
            .is_some_and(|l| l.contains(&concept_name(c)))
    };
    let mut initial: Vec<usize> = Vec::with_capacity(n_init);
    for c in 0..d {
        if initial.iter().any(|&i| has(i, c)) {
            continue;
        }
        match order.iter().find(|&&i| has(i, c) && !initial.contains(&i)) {
            Some(&i) => initial.push(i),
            None => return pre("a concept has no positive sample; lower label noise or D"),
        }
    }
    if initial.len() > n_init {
        return pre("initial labeled size too small to cover every concept");
    }
    let rest: Vec<usize> = order.into_iter().filter(|i| !initial.contains(i)).collect();
    let fill = n_init - initial.len();
    initial.extend_from_slice(&rest[..fill]);
    let test = &rest[fill..fill + n_test];
    let unlabeled = &rest[fill + n_test..];

    let ids = |v: &[usize]| v.iter().map(|&i| samples[i].id.clone()).collect();
    let splits = SplitsRecord {
        initial_labeled: ids(&initial),
        unlabeled: ids(unlabeled),
        test: ids(test),
    };
    Ok(DatasetFile {
        vocabulary: (0..d).map(concept_name).collect(),
        feature_dim: m,
        samples,
        splits,
    })
}

fn concept_name(c: usize) -> String {
    format!("c{c}")
}
