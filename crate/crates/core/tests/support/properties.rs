//! Randomized property checks shared by the integration and acceptance
//! tests. Each returns a description of the first violation it finds.

#![allow(dead_code)]

use crm_active::clustering::{xmeans, ClusterState, EntropyParams, PointView};
use crm_active::dataset::LabelSet;
use crm_active::kernels::{estimate_gamma, gaussian_kernel, KernelParams};
use crm_active::relevance::{RelevanceModel, TrainingPoint};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest eigenvalue of the Gaussian Gram matrix of `n` random points.
pub fn gram_min_eigenvalue(seed: u64, n: usize) -> f64 {
    let mut rng = rng(seed);
    let dims = rng.gen_range(1..=6);
    let sigma = rng.gen_range(0.2..3.0);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dims).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        gaussian_kernel(&pts[i], &pts[j], sigma).unwrap()
    });
    gram.symmetric_eigen().eigenvalues.min()
}

/// Error-free transformation `a * b = p + e`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `exp(-|x - y|^2 / (2 sigma^2))` with the exponent carried in double-double
/// precision and a first-order correction for its low word.
pub fn gaussian_extended(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (a, b) in x.iter().zip(y) {
        let (d, de) = two_sum(*a, -*b);
        let (p, pe) = two_prod(d, d);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += se + pe + 2.0 * d * de;
    }
    let (s2, s2e) = two_prod(sigma, sigma);
    let denom = 2.0 * s2;
    let q = hi / denom;
    // remainder of the division, then the low-order parts
    let r = (-q).mul_add(denom, hi);
    let q_lo = (r + lo - q * 2.0 * s2e) / denom;
    (-q).exp() * (1.0 - q_lo)
}

/// Largest `|sum_w P(w|r) - 1|` over `queries` random points against a
/// model trained on `train` random samples.
pub fn posterior_sum_deviation(seed: u64, train: usize, queries: usize) -> (f64, bool) {
    let mut rng = rng(seed);
    let dims = 5;
    let concepts = 8;
    let points: Vec<TrainingPoint> = (0..train)
        .map(|i| TrainingPoint {
            id: format!("t{i}"),
            features: (0..dims).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            labels: LabelSet::from_bits((0..concepts).map(|_| rng.gen_bool(0.3)).collect()),
        })
        .collect();
    let vocab = (0..concepts).map(|c| format!("c{c}")).collect();
    let model = RelevanceModel::train(points, vocab, 0.5, 0.25).unwrap();
    let mut worst = 0.0f64;
    let mut in_range = true;
    for _ in 0..queries {
        // Wide spread so some queries sit far from every training point.
        let r: Vec<f64> = (0..dims).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let p = model.word_posteriors(&r).unwrap();
        in_range &= p.iter().all(|v| (0.0..=1.0).contains(v));
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    (worst, in_range)
}

fn centroid(features: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = features[0].len();
    let mut c = vec![0.0; dim];
    for &m in members {
        for d in 0..dim {
            c[d] += features[m][d];
        }
    }
    c.iter().map(|v| v / members.len() as f64).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Structural checks on a cluster state over `universe`.
pub fn check_state(
    state: &ClusterState,
    universe: &[usize],
    features: &[Vec<f64>],
    labels: &[Option<LabelSet>],
) -> Result<(), String> {
    let mut all: Vec<usize> = state
        .clusters
        .iter()
        .flat_map(|c| c.members.clone())
        .collect();
    all.sort_unstable();
    let mut want = universe.to_vec();
    want.sort_unstable();
    if all != want {
        return Err(format!("member multiset {all:?} != universe {want:?}"));
    }
    if !state.is_partition_of(universe) {
        return Err("assignment map disagrees with cluster members".into());
    }
    for c in &state.clusters {
        let ctr = centroid(features, &c.members);
        let rep_d = dist2(&features[c.representative], &ctr);
        if let Some(&closer) = c
            .members
            .iter()
            .find(|&&m| dist2(&features[m], &ctr) < rep_d - 1e-12 * rep_d.max(1.0))
        {
            return Err(format!(
                "cluster {}: member {closer} is closer to the centroid than representative {}",
                c.id, c.representative
            ));
        }
        let mut lab = c.labeled.clone();
        lab.sort_unstable();
        let want: Vec<usize> = c
            .members
            .iter()
            .copied()
            .filter(|&m| labels[m].is_some())
            .collect();
        if lab != want {
            return Err(format!(
                "cluster {}: labeled list {lab:?} != labeled members {want:?}",
                c.id
            ));
        }
    }
    Ok(())
}

/// One randomized sequence of label-sharing, redistribute and refine steps.
pub fn partition_sequence(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let n = rng.gen_range(8..=30);
    let d = 4;
    let centers: Vec<[f64; 2]> = (0..3)
        .map(|_| [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)])
        .collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = centers[rng.gen_range(0..3)];
            vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]
        })
        .collect();
    let truth: Vec<LabelSet> = (0..n)
        .map(|_| {
            let mut bits: Vec<bool> = (0..d).map(|_| rng.gen_bool(0.35)).collect();
            bits[rng.gen_range(0..d)] = true;
            LabelSet::from_bits(bits)
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
    let universe: Vec<usize> = (0..n).collect();
    let mut order = universe.clone();
    order.shuffle(&mut rng);
    let n_init = rng.gen_range(2..=n / 3);
    let mut labeled: Vec<usize> = order[..n_init].to_vec();
    let mut pool: Vec<usize> = order[n_init..].to_vec();
    let mut known: Vec<Option<LabelSet>> = vec![None; n];
    for &l in &labeled {
        known[l] = Some(truth[l].clone());
    }

    let k_max = (n as f64).sqrt().ceil() as usize;
    let mut state = {
        let view = PointView {
            ids: &ids,
            features: &features,
            labels: &known,
        };
        let (mut s, _) = ClusterState::initial(&view, &universe, &labeled, 1, k_max, 2, seed)
            .map_err(|e| e.to_string())?;
        s.enforce_label_sharing(&labeled, &view)
            .map_err(|e| e.to_string())?;
        s
    };
    check_state(&state, &universe, &features, &known).map_err(|e| format!("after init: {e}"))?;

    let steps = rng.gen_range(1..=8);
    for step in 0..steps {
        if rng.gen_bool(0.4) || pool.is_empty() {
            let view = PointView {
                ids: &ids,
                features: &features,
                labels: &known,
            };
            let c = &state.clusters[rng.gen_range(0..state.clusters.len())];
            let (cid, seed_sample) = (c.id, c.members[rng.gen_range(0..c.members.len())]);
            state
                .redistribute(cid, seed_sample, &view)
                .map_err(|e| format!("step {step}: {e}"))?;
        } else {
            let batch: Vec<usize> = pool.drain(..rng.gen_range(1..=pool.len().min(4))).collect();
            let gamma = estimate_gamma(labeled.iter().map(|&l| known[l].as_ref().unwrap()))
                .map_err(|e| e.to_string())?;
            let params = EntropyParams {
                kernel: KernelParams::new(rng.gen_range(0.5..3.0), gamma)
                    .map_err(|e| e.to_string())?,
                normalized: rng.gen_bool(0.5),
            };
            let use_threshold = rng.gen_bool(0.7);
            {
                let view = PointView {
                    ids: &ids,
                    features: &features,
                    labels: &known,
                };
                if use_threshold {
                    state
                        .update_h_worst(&view, &params)
                        .map_err(|e| e.to_string())?;
                } else {
                    state.h_worst = None;
                }
            }
            for &b in &batch {
                known[b] = Some(truth[b].clone());
                labeled.push(b);
            }
            let view = PointView {
                ids: &ids,
                features: &features,
                labels: &known,
            };
            state
                .refine_after_batch(&batch, &view, &params)
                .map_err(|e| format!("step {step}: {e}"))?;
        }
        check_state(&state, &universe, &features, &known)
            .map_err(|e| format!("after step {step}: {e}"))?;
    }
    Ok(())
}

/// K chosen by X-Means over `[1, ceil(sqrt(N))]` on `blobs` Gaussian blobs of
/// 20 points with unit std whose centers are at least `separation` apart.
pub fn xmeans_trial(seed: u64, blobs: usize, separation: f64) -> usize {
    let mut rng = rng(seed);
    let dims = 2;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < blobs {
        let c: Vec<f64> = (0..dims).map(|_| rng.gen_range(-30.0..30.0)).collect();
        if centers.iter().all(|o| dist2(o, &c).sqrt() >= separation) {
            centers.push(c);
        }
    }
    let noise = Normal::new(0.0, 1.0).unwrap();
    let features: Vec<Vec<f64>> = centers
        .iter()
        .flat_map(|c| {
            (0..20)
                .map(|_| {
                    c.iter()
                        .map(|v| v + noise.sample(&mut rng))
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let points: Vec<usize> = (0..features.len()).collect();
    let k_max = (features.len() as f64).sqrt().ceil() as usize;
    xmeans(&features, &points, 1, k_max, 5, seed).unwrap().k
}
