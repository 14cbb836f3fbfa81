//! Naive reference implementations, written from the formulas with plain
//! products and double loops, and per-trial comparison checks against the
//! library. Shared by the integration and acceptance tests.

#![allow(dead_code)]

use crm_active::clustering::{ClusterState, EntropyParams, PointView};
use crm_active::config::BETA_GRID;
use crm_active::dataset::LabelSet;
use crm_active::kernels::{KernelParams, LabeledPoint};
use crm_active::relevance::{RelevanceModel, TrainingPoint};
use crm_active::selection::{density, density_table, diversity, select_batch, InfoScore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REL_TOL: f64 = 1e-9;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn check(name: &str, got: f64, want: f64) -> Result<(), String> {
    if rel_close(got, want, REL_TOL) {
        Ok(())
    } else {
        Err(format!("{name}: library {got:e} vs oracle {want:e}"))
    }
}

/// A random instance: up to 6 samples, 4 dims, 5 concepts.
pub struct Toy {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<bool>>,
    pub dims: usize,
    pub concepts: usize,
}

impl Toy {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(2..=6);
        let dims = rng.gen_range(1..=4);
        let concepts = rng.gen_range(2..=5);
        let features = (0..n)
            .map(|_| (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..n)
            .map(|_| (0..concepts).map(|_| rng.gen_bool(0.4)).collect())
            .collect();
        Toy {
            features,
            labels,
            dims,
            concepts,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn ids(&self) -> Vec<String> {
        (0..self.len()).map(|i| format!("x{i}")).collect()
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        self.labels
            .iter()
            .map(|l| LabelSet::from_bits(l.clone()))
            .collect()
    }

    pub fn model(&self, lambda: f64, beta: f64) -> RelevanceModel {
        let points = (0..self.len())
            .map(|i| TrainingPoint {
                id: format!("x{i}"),
                features: self.features[i].clone(),
                labels: LabelSet::from_bits(self.labels[i].clone()),
            })
            .collect();
        let vocab = (0..self.concepts).map(|c| format!("c{c}")).collect();
        RelevanceModel::train(points, vocab, lambda, beta).unwrap()
    }
}

// ---- reference formulas ----

pub fn naive_word_given(toy: &Toy, lambda: f64, w: usize, j: usize) -> f64 {
    let m_j = toy.labels[j].iter().filter(|&&b| b).count();
    let total: usize = toy
        .labels
        .iter()
        .map(|l| l.iter().filter(|&&b| b).count())
        .sum();
    let n_w = toy.labels.iter().filter(|l| l[w]).count();
    let own = if m_j > 0 && toy.labels[j][w] {
        1.0 / m_j as f64
    } else {
        0.0
    };
    let bg = if total > 0 {
        n_w as f64 / total as f64
    } else {
        0.0
    };
    (1.0 - lambda) * own + lambda * bg
}

pub fn naive_feature_likelihood(toy: &Toy, beta: f64, r: &[f64], j: usize) -> f64 {
    let mut p = 1.0;
    for i in 0..toy.dims {
        let d = r[i] - toy.features[j][i];
        p *= (1.0 / (2.0 * std::f64::consts::PI * beta).sqrt()) * (-(d * d) / (2.0 * beta)).exp();
    }
    p
}

pub fn naive_joint(toy: &Toy, lambda: f64, beta: f64, words: &[usize], r: &[f64]) -> f64 {
    let t = toy.len() as f64;
    let mut sum = 0.0;
    for j in 0..toy.len() {
        let mut term = naive_feature_likelihood(toy, beta, r, j) / t;
        for &w in words {
            term *= naive_word_given(toy, lambda, w, j);
        }
        sum += term;
    }
    sum
}

pub fn naive_posteriors(toy: &Toy, lambda: f64, beta: f64, r: &[f64]) -> Vec<f64> {
    let joint: Vec<f64> = (0..toy.concepts)
        .map(|w| naive_joint(toy, lambda, beta, &[w], r))
        .collect();
    let z: f64 = joint.iter().sum();
    if z == 0.0 {
        return vec![1.0 / toy.concepts as f64; toy.concepts];
    }
    joint.iter().map(|p| p / z).collect()
}

pub fn naive_gaussian(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..x.len() {
        d2 += (x[i] - y[i]) * (x[i] - y[i]);
    }
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn naive_bernoulli(y: &[bool], y2: &[bool], gamma: &[f64]) -> f64 {
    let mut p = 1.0;
    for d in 0..gamma.len() {
        let (a, b) = (y[d] as i32, y2[d] as i32);
        p *= gamma[d].powi(a)
            * gamma[d].powi(b)
            * (1.0 - gamma[d]).powi(1 - a)
            * (1.0 - gamma[d]).powi(1 - b);
    }
    p
}

pub fn naive_combined(toy: &Toy, i: usize, j: usize, sigma: f64, gamma: &[f64]) -> f64 {
    naive_bernoulli(&toy.labels[i], &toy.labels[j], gamma)
        * naive_gaussian(&toy.features[i], &toy.features[j], sigma)
}

pub fn naive_entropy(
    toy: &Toy,
    members: &[usize],
    sigma: f64,
    gamma: &[f64],
    normalized: bool,
) -> f64 {
    let n = members.len() as f64;
    let k = |i: usize, j: usize| {
        let v = naive_combined(toy, i, j, sigma, gamma);
        if normalized {
            v / (naive_combined(toy, i, i, sigma, gamma) * naive_combined(toy, j, j, sigma, gamma))
                .sqrt()
        } else {
            v
        }
    };
    let mut outer = 0.0;
    for &i in members {
        let mut inner = 0.0;
        for &j in members {
            inner += k(i, j);
        }
        outer += (inner / n).ln();
    }
    -outer / n
}

pub fn naive_kde(toy: &Toy, groups: &[Vec<usize>], x: usize, sigma: f64) -> f64 {
    let group = groups.iter().find(|g| g.contains(&x)).unwrap();
    let mut s = 0.0;
    for &m in group {
        s += naive_gaussian(&toy.features[x], &toy.features[m], sigma);
    }
    s / group.len() as f64
}

pub fn naive_density(toy: &Toy, groups: &[Vec<usize>], x: usize, sigma: f64) -> f64 {
    let mut max = 0.0f64;
    for g in groups {
        for &m in g {
            max = max.max(naive_kde(toy, groups, m, sigma));
        }
    }
    naive_kde(toy, groups, x, sigma) / max
}

/// Member closest to the arithmetic mean of its group; lowest index on ties.
pub fn naive_representative(toy: &Toy, group: &[usize]) -> usize {
    let mut centroid = vec![0.0; toy.dims];
    for &m in group {
        for i in 0..toy.dims {
            centroid[i] += toy.features[m][i] / group.len() as f64;
        }
    }
    let mut best = group[0];
    let mut best_d = f64::INFINITY;
    let mut sorted = group.to_vec();
    sorted.sort();
    for m in sorted {
        let d: f64 = (0..toy.dims)
            .map(|i| (toy.features[m][i] - centroid[i]).powi(2))
            .sum();
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

pub fn naive_diversity(x: &[f64], reps: &[Vec<f64>], sigma: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for r in reps {
        let cos = naive_gaussian(x, r, sigma)
            / (naive_gaussian(x, x, sigma) * naive_gaussian(r, r, sigma)).sqrt();
        if cos > best {
            best = cos;
        }
    }
    1.0 - best
}

/// Repeated arg-max extraction: highest info first, smallest id on ties.
pub fn naive_select(scores: &[(String, usize, f64)], k: usize) -> Vec<usize> {
    let mut left: Vec<&(String, usize, f64)> = scores.iter().collect();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (a, b) = (left[i], left[best]);
            if a.2 > b.2 || (a.2 == b.2 && a.0 < b.0) {
                best = i;
            }
        }
        out.push(left.remove(best).1);
    }
    out
}

// ---- per-trial checks ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_smoothing(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let lambda = rng.gen_range(1..=9) as f64 / 10.0;
    (lambda, BETA_GRID[rng.gen_range(0..BETA_GRID.len())])
}

fn random_groups(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let k = rng.gen_range(1..=n.min(3));
    let mut groups: Vec<Vec<usize>> = (0..k).map(|g| vec![g]).collect();
    for i in k..n {
        groups[rng.gen_range(0..k)].push(i);
    }
    groups
}

pub fn check_log_joint(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let toy = Toy::random(&mut rng);
    let (lambda, beta) = random_smoothing(&mut rng);
    let model = toy.model(lambda, beta);
    let r: Vec<f64> = (0..toy.dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n_words = rng.gen_range(0..=toy.concepts);
    let words: Vec<usize> = (0..n_words)
        .map(|_| rng.gen_range(0..toy.concepts))
        .collect();
    let got = model.log_joint(&words, &r).map_err(|e| e.to_string())?;
    check(
        "log_joint",
        got.exp(),
        naive_joint(&toy, lambda, beta, &words, &r),
    )
}

pub fn check_posteriors(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let toy = Toy::random(&mut rng);
    let (lambda, beta) = random_smoothing(&mut rng);
    let model = toy.model(lambda, beta);
    let r: Vec<f64> = (0..toy.dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let got = model.word_posteriors(&r).map_err(|e| e.to_string())?;
    let want = naive_posteriors(&toy, lambda, beta, &r);
    for (w, (g, o)) in got.iter().zip(&want).enumerate() {
        check(&format!("posterior[{w}]"), *g, *o)?;
    }
    Ok(())
}

pub fn check_entropy(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let toy = Toy::random(&mut rng);
    let sigma = rng.gen_range(0.3..2.0);
    let gamma: Vec<f64> = (0..toy.concepts)
        .map(|_| rng.gen_range(0.05..0.95))
        .collect();
    let sets = toy.label_sets();
    let points: Vec<LabeledPoint<'_>> = (0..toy.len())
        .map(|i| LabeledPoint {
            features: &toy.features[i],
            labels: &sets[i],
        })
        .collect();
    let members: Vec<usize> = (0..toy.len()).collect();
    for normalized in [false, true] {
        let params = EntropyParams {
            kernel: KernelParams::new(sigma, gamma.clone()).map_err(|e| e.to_string())?,
            normalized,
        };
        let got = crm_active::clustering::empirical_entropy(&points, &params)
            .map_err(|e| e.to_string())?;
        check(
            &format!("entropy(normalized={normalized})"),
            got,
            naive_entropy(&toy, &members, sigma, &gamma, normalized),
        )?;
    }
    Ok(())
}

pub fn check_density(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let toy = Toy::random(&mut rng);
    let sigma = rng.gen_range(0.3..2.0);
    let groups = random_groups(&mut rng, toy.len());
    let ids = toy.ids();
    let labels: Vec<Option<LabelSet>> = vec![None; toy.len()];
    let view = PointView {
        ids: &ids,
        features: &toy.features,
        labels: &labels,
    };
    let state = ClusterState::from_groups(&view, groups.clone(), &[]).map_err(|e| e.to_string())?;
    let table = density_table(&state, &toy.features, sigma).map_err(|e| e.to_string())?;
    for x in 0..toy.len() {
        let got = density(x, &table).map_err(|e| e.to_string())?;
        check(
            &format!("density[{x}]"),
            got,
            naive_density(&toy, &groups, x, sigma),
        )?;
    }
    Ok(())
}

pub fn check_diversity(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let toy = Toy::random(&mut rng);
    let sigma = rng.gen_range(0.3..2.0);
    let groups = random_groups(&mut rng, toy.len());
    let ids = toy.ids();
    let labels: Vec<Option<LabelSet>> = vec![None; toy.len()];
    let view = PointView {
        ids: &ids,
        features: &toy.features,
        labels: &labels,
    };
    let state = ClusterState::from_groups(&view, groups.clone(), &[]).map_err(|e| e.to_string())?;
    let mut reps = state.representatives();
    let mut want_reps: Vec<usize> = groups
        .iter()
        .map(|g| naive_representative(&toy, g))
        .collect();
    reps.sort();
    want_reps.sort();
    if reps != want_reps {
        return Err(format!(
            "representatives: library {reps:?} vs oracle {want_reps:?}"
        ));
    }
    let rep_features: Vec<Vec<f64>> = reps.iter().map(|&r| toy.features[r].clone()).collect();
    let rep_slices: Vec<&[f64]> = rep_features.iter().map(Vec::as_slice).collect();
    for x in 0..toy.len() {
        let got = diversity(&toy.features[x], &rep_slices, sigma).map_err(|e| e.to_string())?;
        check(
            &format!("diversity[{x}]"),
            got,
            naive_diversity(&toy.features[x], &rep_features, sigma),
        )?;
    }
    Ok(())
}

pub fn check_select(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let n = rng.gen_range(1..=20);
    // Coarse values so ties occur.
    let raw: Vec<(String, usize, f64)> = (0..n)
        .map(|i| {
            (
                format!("s{:02}", (i * 7) % 20),
                i,
                rng.gen_range(0..6) as f64 * 0.25,
            )
        })
        .collect();
    let scores: Vec<InfoScore> = raw
        .iter()
        .map(|(id, i, info)| InfoScore {
            sample_id: id.clone(),
            sample: *i,
            unct: 0.0,
            den: 0.0,
            div: 0.0,
            info: *info,
        })
        .collect();
    let k = rng.gen_range(0..=n + 2);
    let got = select_batch(&scores, k);
    let want = naive_select(&raw, k);
    if got == want {
        Ok(())
    } else {
        Err(format!(
            "select_batch(k={k}): library {got:?} vs oracle {want:?}"
        ))
    }
}

pub type Check = fn(u64) -> Result<(), String>;

pub const CHECKS: [(&str, Check); 6] = [
    ("log_joint", check_log_joint),
    ("word_posteriors", check_posteriors),
    ("empirical_entropy", check_entropy),
    ("density", check_density),
    ("diversity", check_diversity),
    ("select_batch", check_select),
];

/// Runs every check for `trials` seeds; returns the failures.
pub fn run_all(trials: u64) -> Vec<String> {
    let mut failures = Vec::new();
    for (name, f) in CHECKS {
        for seed in 0..trials {
            if let Err(e) = f(seed.wrapping_mul(0x9E37_79B9) ^ name.len() as u64) {
                failures.push(format!("{name} trial {seed}: {e}"));
            }
        }
    }
    failures
}
