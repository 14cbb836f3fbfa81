//! Feature-space clustering and label-aware cluster refinement.
//!
//! X-Means picks K by maximum BIC over a range. Afterwards clusters are only
//! ever split: a labeled sample that disagrees with its cluster (shares no
//! concept with the other labeled members, or pushes the cluster's empirical
//! entropy above the running worst value) seeds a new cluster, and the old
//! cluster's unlabeled members are divided between the two by 2-means.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;

use log::warn;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::error::{Error, Result};
use crate::kernels::{log_combined_kernel, KernelParams, LabeledPoint};
use crate::math::{log_sum_exp, mean_vector, squared_distance};

const MAX_ITERATIONS: usize = 100;

/// Borrowed, index-addressed view of the samples being clustered.
///
/// `labels[i]` holds the labels known to the current session, so a sample
/// whose ground truth is still hidden is `None` here.
#[derive(Debug, Clone, Copy)]
pub struct PointView<'a> {
    pub ids: &'a [String],
    pub features: &'a [Vec<f64>],
    pub labels: &'a [Option<LabelSet>],
}

impl<'a> PointView<'a> {
    fn feat(&self, i: usize) -> &'a [f64] {
        &self.features[i]
    }

    fn is_labeled(&self, i: usize) -> bool {
        self.labels[i].is_some()
    }

    fn labeled_point(&self, i: usize) -> Result<LabeledPoint<'a>> {
        let labels = self.labels[i].as_ref().ok_or_else(|| {
            Error::Precondition(format!("sample `{}` is not labeled", self.ids[i]))
        })?;
        Ok(LabeledPoint {
            features: &self.features[i],
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index of each input point, parallel to the input slice.
    pub assignment: Vec<usize>,
    pub sse: f64,
    pub iterations: usize,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(
    features: &[Vec<f64>],
    points: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut centroids = vec![features[points[rng.gen_range(0..points.len())]].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|&p| squared_distance(&features[p], &centroids[0]))
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.gen_range(0..points.len()),
        };
        let c = features[points[next]].clone();
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(&features[p], &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm over `points` (indices into `features`).
///
/// Without `initial` centroids, k-means++ seeding is drawn from `seed`.
/// Iterates to an assignment fixpoint or 100 rounds. An emptied cluster is
/// re-seeded with the point farthest from its own centroid.
pub fn kmeans(
    features: &[Vec<f64>],
    points: &[usize],
    k: usize,
    initial: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    let dim = features[points[0]].len();
    let mut centroids = match initial {
        Some(init) => {
            if init.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "{} initial centroids given for k = {k}",
                    init.len()
                )));
            }
            init.to_vec()
        }
        None => kmeans_pp(features, points, k, &mut ChaCha8Rng::seed_from_u64(seed)),
    };

    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let next: Vec<usize> = points
            .iter()
            .map(|&p| nearest(&features[p], &centroids).0)
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        reseed_empty(features, points, &mut assignment, &centroids, k);
        centroids = (0..k)
            .map(|c| {
                mean_vector(
                    points
                        .iter()
                        .zip(&assignment)
                        .filter(|(_, &a)| a == c)
                        .map(|(&p, _)| features[p].as_slice()),
                    dim,
                )
            })
            .collect();
    }
    let sse = points
        .iter()
        .zip(&assignment)
        .map(|(&p, &a)| squared_distance(&features[p], &centroids[a]))
        .sum();
    Ok(KMeansResult {
        centroids,
        assignment,
        sse,
        iterations,
    })
}

fn reseed_empty(
    features: &[Vec<f64>],
    points: &[usize],
    assignment: &mut [usize],
    centroids: &[Vec<f64>],
    k: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // farthest point among clusters that can spare one
        let donor = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = squared_distance(&features[points[a]], &centroids[assignment[a]]);
                let db = squared_distance(&features[points[b]], &centroids[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            });
        match donor {
            Some(i) => assignment[i] = empty,
            None => return,
        }
    }
}

/// BIC of a hard clustering under a spherical Gaussian mixture with one
/// shared variance: `logL - p/2 ln n`, `p = K (M + 1)`.
pub fn bic(features: &[Vec<f64>], points: &[usize], result: &KMeansResult) -> f64 {
    let n = points.len();
    let k = result.centroids.len();
    if n <= k {
        return f64::NEG_INFINITY;
    }
    let m = features[points[0]].len() as f64;
    let nf = n as f64;
    let variance = (result.sse / (m * (n - k) as f64)).max(1e-12);
    let mut sizes = vec![0usize; k];
    for &a in &result.assignment {
        sizes[a] += 1;
    }
    let mixing: f64 = sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| s as f64 * (s as f64 / nf).ln())
        .sum();
    let log_likelihood =
        mixing - 0.5 * nf * m * (2.0 * PI * variance).ln() - result.sse / (2.0 * variance);
    let params = k as f64 * (m + 1.0);
    log_likelihood - 0.5 * params * nf.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XMeansResult {
    pub k: usize,
    pub clustering: KMeansResult,
    /// BIC of the best restart for every candidate K.
    pub bic_by_k: Vec<(usize, f64)>,
}

/// Chooses K in `[k_min, k_max]` by maximal BIC, keeping the lowest-SSE of
/// `restarts` seeded k-means runs per candidate. Ties favor the smaller K.
pub fn xmeans(
    features: &[Vec<f64>],
    points: &[usize],
    k_min: usize,
    k_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<XMeansResult> {
    if k_min == 0 || k_min > k_max || k_max > points.len() {
        return Err(Error::InvalidParameter(format!(
            "invalid cluster range [{k_min}, {k_max}] for {} points",
            points.len()
        )));
    }
    let mut best: Option<(f64, KMeansResult)> = None;
    let mut bic_by_k = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let mut run_best: Option<KMeansResult> = None;
        for r in 0..restarts.max(1) {
            let run_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((k as u64) << 16 | r as u64);
            let run = kmeans(features, points, k, None, run_seed)?;
            if run_best.as_ref().map_or(true, |b| run.sse < b.sse) {
                run_best = Some(run);
            }
        }
        let run = run_best.expect("at least one restart");
        let score = bic(features, points, &run);
        bic_by_k.push((k, score));
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, run));
        }
    }
    let (_, clustering) = best.expect("non-empty range");
    Ok(XMeansResult {
        k: clustering.centroids.len(),
        clustering,
        bic_by_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    /// Sample indices, ascending.
    pub members: Vec<usize>,
    /// Labeled members in the order they became labeled.
    pub labeled: Vec<usize>,
    pub representative: usize,
    pub centroid: Vec<f64>,
}

impl Cluster {
    fn build(
        id: usize,
        mut members: Vec<usize>,
        labeled: Vec<usize>,
        view: &PointView<'_>,
    ) -> Self {
        members.sort_unstable();
        let dim = view.feat(members[0]).len();
        let centroid = mean_vector(members.iter().map(|&i| view.feat(i)), dim);
        let mut c = Cluster {
            id,
            members,
            labeled,
            representative: 0,
            centroid,
        };
        c.representative = representative(&c, view);
        c
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, sample: usize) -> bool {
        self.members.binary_search(&sample).is_ok()
    }

    pub fn unlabeled<'v>(&'v self, view: &'v PointView<'_>) -> impl Iterator<Item = usize> + 'v {
        self.members
            .iter()
            .copied()
            .filter(|&i| !view.is_labeled(i))
    }
}

/// Member closest to the centroid; ties go to the smaller sample id.
pub fn representative(cluster: &Cluster, view: &PointView<'_>) -> usize {
    *cluster
        .members
        .iter()
        .min_by(|&&a, &&b| {
            squared_distance(view.feat(a), &cluster.centroid)
                .total_cmp(&squared_distance(view.feat(b), &cluster.centroid))
                .then_with(|| view.ids[a].cmp(&view.ids[b]))
        })
        .expect("cluster has members")
}

/// Kernel configuration for empirical entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub kernel: KernelParams,
    /// Divide each kernel value by `sqrt(K(x,x) K(y,y))` first.
    pub normalized: bool,
}

/// Log Gram matrix of the combined kernel over `points`.
fn log_gram(points: &[LabeledPoint<'_>], params: &EntropyParams) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = log_combined_kernel(points[i], points[j], &params.kernel)?;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    if params.normalized {
        let diag: Vec<f64> = (0..n).map(|i| g[i][i]).collect();
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= 0.5 * (diag[i] + diag[j]);
            }
        }
    }
    Ok(g)
}

/// `-(1/n) sum_i log((1/n) sum_j K(x_i, x_j))` over the rows of `gram`
/// whose index is not `skip`.
fn entropy_from_log_gram(gram: &[Vec<f64>], skip: Option<usize>) -> f64 {
    let idx: Vec<usize> = (0..gram.len()).filter(|&i| Some(i) != skip).collect();
    let n = idx.len() as f64;
    let mut row = Vec::with_capacity(idx.len());
    let total: f64 = idx
        .iter()
        .map(|&i| {
            row.clear();
            row.extend(idx.iter().map(|&j| gram[i][j]));
            log_sum_exp(&row) - n.ln()
        })
        .sum();
    -total / n
}

/// Empirical entropy of a set of labeled points under the combined kernel.
pub fn empirical_entropy(points: &[LabeledPoint<'_>], params: &EntropyParams) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Precondition(format!(
            "empirical entropy needs more than one labeled sample, got {}",
            points.len()
        )));
    }
    Ok(entropy_from_log_gram(&log_gram(points, params)?, None))
}

/// Per-cluster row of the inspection export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub size: usize,
    pub labeled_count: usize,
    pub representative_id: String,
    pub entropy: Option<f64>,
}

/// A split performed during refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub cluster_id: usize,
    pub new_cluster_id: usize,
    pub seed_sample: usize,
    pub trigger: SplitTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTrigger {
    NoSharedConcept,
    EntropyThreshold,
    /// No single removal met the threshold; the best removal was used.
    EntropyFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub clusters: Vec<Cluster>,
    pub h_worst: Option<f64>,
    /// Sample index to cluster id.
    pub assignment: BTreeMap<usize, usize>,
    next_id: usize,
}

impl ClusterState {
    /// Runs X-Means over `universe` and records which members are labeled,
    /// in `labeled_order`.
    pub fn initial(
        view: &PointView<'_>,
        universe: &[usize],
        labeled_order: &[usize],
        k_min: usize,
        k_max: usize,
        restarts: usize,
        seed: u64,
    ) -> Result<(Self, XMeansResult)> {
        let k_max = k_max.min(universe.len()).max(1);
        let k_min = k_min.min(k_max);
        let result = xmeans(view.features, universe, k_min, k_max, restarts, seed)?;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); result.k];
        for (&p, &a) in universe.iter().zip(&result.clustering.assignment) {
            groups[a].push(p);
        }
        let mut state = ClusterState {
            clusters: Vec::new(),
            h_worst: None,
            assignment: BTreeMap::new(),
            next_id: 0,
        };
        for members in groups.into_iter().filter(|g| !g.is_empty()) {
            let id = state.fresh_id();
            let set: HashSet<usize> = members.iter().copied().collect();
            let labeled = labeled_order
                .iter()
                .copied()
                .filter(|l| set.contains(l))
                .collect();
            for &m in &members {
                state.assignment.insert(m, id);
            }
            state
                .clusters
                .push(Cluster::build(id, members, labeled, view));
        }
        Ok((state, result))
    }

    /// Builds a state from explicit member lists (labeled order taken from
    /// `labeled_order`).
    pub fn from_groups(
        view: &PointView<'_>,
        groups: Vec<Vec<usize>>,
        labeled_order: &[usize],
    ) -> Result<Self> {
        let mut state = ClusterState {
            clusters: Vec::new(),
            h_worst: None,
            assignment: BTreeMap::new(),
            next_id: 0,
        };
        for members in groups {
            if members.is_empty() {
                return Err(Error::Precondition("empty cluster".into()));
            }
            let id = state.fresh_id();
            for &m in &members {
                if state.assignment.insert(m, id).is_some() {
                    return Err(Error::Precondition(format!(
                        "sample `{}` assigned twice",
                        view.ids[m]
                    )));
                }
            }
            let labeled = labeled_order
                .iter()
                .copied()
                .filter(|l| members.contains(l))
                .collect();
            state
                .clusters
                .push(Cluster::build(id, members, labeled, view));
        }
        Ok(state)
    }

    fn fresh_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster(&self, id: usize) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    fn position(&self, id: usize) -> Result<usize> {
        self.clusters
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::Precondition(format!("no cluster with id {id}")))
    }

    pub fn cluster_of(&self, sample: usize) -> Option<usize> {
        self.assignment.get(&sample).copied()
    }

    pub fn representatives(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.representative).collect()
    }

    /// True when every sample in `universe` sits in exactly one cluster and
    /// nothing else is clustered.
    pub fn is_partition_of(&self, universe: &[usize]) -> bool {
        let mut all: Vec<usize> = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().copied())
            .collect();
        all.sort_unstable();
        let mut expected = universe.to_vec();
        expected.sort_unstable();
        all == expected
            && self.assignment.len() == expected.len()
            && self.clusters.iter().all(|c| {
                c.members
                    .iter()
                    .all(|m| self.assignment.get(m) == Some(&c.id))
            })
    }

    /// Entropy of cluster `id`, or `None` with fewer than two labeled members.
    pub fn cluster_entropy(
        &self,
        id: usize,
        view: &PointView<'_>,
        params: &EntropyParams,
    ) -> Result<Option<f64>> {
        let c = &self.clusters[self.position(id)?];
        if c.labeled.len() < 2 {
            return Ok(None);
        }
        let pts = c
            .labeled
            .iter()
            .map(|&i| view.labeled_point(i))
            .collect::<Result<Vec<_>>>()?;
        empirical_entropy(&pts, params).map(Some)
    }

    /// Maximum entropy over clusters with at least two labeled members;
    /// stored as the refinement threshold.
    pub fn update_h_worst(
        &mut self,
        view: &PointView<'_>,
        params: &EntropyParams,
    ) -> Result<Option<f64>> {
        let mut worst: Option<f64> = None;
        for c in &self.clusters {
            if let Some(h) = self.cluster_entropy(c.id, view, params)? {
                worst = Some(worst.map_or(h, |w: f64| w.max(h)));
            }
        }
        self.h_worst = worst;
        Ok(worst)
    }

    /// True when `sample` shares a concept with another labeled member of
    /// its cluster, or is that cluster's only labeled member.
    pub fn label_share_ok(&self, sample: usize, view: &PointView<'_>) -> Result<bool> {
        let id = self.cluster_of(sample).ok_or_else(|| {
            Error::Precondition(format!("sample `{}` is not clustered", view.ids[sample]))
        })?;
        let labels = view.labels[sample].as_ref().ok_or_else(|| {
            Error::Precondition(format!("sample `{}` is not labeled", view.ids[sample]))
        })?;
        let c = &self.clusters[self.position(id)?];
        let mut others = c.labeled.iter().filter(|&&o| o != sample).peekable();
        if others.peek().is_none() {
            return Ok(true);
        }
        Ok(others.any(|&o| {
            view.labels[o]
                .as_ref()
                .is_some_and(|l| l.shares_any(labels))
        }))
    }

    /// Splits `seed_sample` out of cluster `cluster_id` into a new cluster and
    /// divides the old cluster's unlabeled members between the old
    /// representative and the seed by 2-means. Returns the new cluster id.
    pub fn redistribute(
        &mut self,
        cluster_id: usize,
        seed_sample: usize,
        view: &PointView<'_>,
    ) -> Result<usize> {
        let pos = self.position(cluster_id)?;
        let old = self.clusters[pos].clone();
        if !old.contains(seed_sample) {
            return Err(Error::Precondition(format!(
                "sample `{}` is not in cluster {cluster_id}",
                view.ids[seed_sample]
            )));
        }
        let unlabeled: Vec<usize> = old.unlabeled(view).filter(|&i| i != seed_sample).collect();
        let init = vec![
            view.feat(old.representative).to_vec(),
            view.feat(seed_sample).to_vec(),
        ];
        let to_new: Vec<bool> = if unlabeled.len() >= 2 {
            kmeans(view.features, &unlabeled, 2, Some(&init), 0)?
                .assignment
                .into_iter()
                .map(|a| a == 1)
                .collect()
        } else {
            unlabeled
                .iter()
                .map(|&u| nearest(view.feat(u), &init).0 == 1)
                .collect()
        };

        let mut keep: Vec<usize> = old
            .members
            .iter()
            .copied()
            .filter(|&m| m != seed_sample && view.is_labeled(m))
            .collect();
        let mut moved = vec![seed_sample];
        for (&u, &n) in unlabeled.iter().zip(&to_new) {
            if n {
                moved.push(u);
            } else {
                keep.push(u);
            }
        }
        let keep_labeled: Vec<usize> = old
            .labeled
            .iter()
            .copied()
            .filter(|&l| l != seed_sample)
            .collect();
        let new_labeled: Vec<usize> = if view.is_labeled(seed_sample) {
            vec![seed_sample]
        } else {
            Vec::new()
        };

        let new_id = self.fresh_id();
        for &m in &moved {
            self.assignment.insert(m, new_id);
        }
        let new_cluster = Cluster::build(new_id, moved, new_labeled, view);
        if keep.is_empty() {
            self.clusters.remove(pos);
        } else {
            self.clusters[pos] = Cluster::build(cluster_id, keep, keep_labeled, view);
        }
        self.clusters.push(new_cluster);
        Ok(new_id)
    }

    /// Applies the label-sharing rule to `samples` in order, splitting each
    /// sample that disagrees with its cluster.
    pub fn enforce_label_sharing(
        &mut self,
        samples: &[usize],
        view: &PointView<'_>,
    ) -> Result<Vec<SplitEvent>> {
        let mut events = Vec::new();
        for &s in samples {
            if !self.label_share_ok(s, view)? {
                let cluster_id = self.cluster_of(s).expect("checked above");
                let new_cluster_id = self.redistribute(cluster_id, s, view)?;
                events.push(SplitEvent {
                    cluster_id,
                    new_cluster_id,
                    seed_sample: s,
                    trigger: SplitTrigger::NoSharedConcept,
                });
            }
        }
        Ok(events)
    }

    /// Refinement after a labeled batch. `new_labels` must already carry
    /// labels in `view`; they join their clusters' labeled lists first, then
    /// each is checked in order against the label-sharing rule (no threshold
    /// yet) or the entropy threshold.
    pub fn refine_after_batch(
        &mut self,
        new_labels: &[usize],
        view: &PointView<'_>,
        params: &EntropyParams,
    ) -> Result<Vec<SplitEvent>> {
        for &a in new_labels {
            if !view.is_labeled(a) {
                return Err(Error::Precondition(format!(
                    "sample `{}` has no revealed labels",
                    view.ids[a]
                )));
            }
            let id = self.cluster_of(a).ok_or_else(|| {
                Error::Precondition(format!("sample `{}` is not clustered", view.ids[a]))
            })?;
            let pos = self.position(id)?;
            if !self.clusters[pos].labeled.contains(&a) {
                self.clusters[pos].labeled.push(a);
            }
        }

        let Some(threshold) = self.h_worst else {
            return self.enforce_label_sharing(new_labels, view);
        };

        let mut events = Vec::new();
        for &a in new_labels {
            let id = self.cluster_of(a).expect("clustered above");
            let labeled = self.clusters[self.position(id)?].labeled.clone();
            if labeled.len() < 2 {
                continue;
            }
            let pts = labeled
                .iter()
                .map(|&i| view.labeled_point(i))
                .collect::<Result<Vec<_>>>()?;
            let gram = log_gram(&pts, params)?;
            let h = entropy_from_log_gram(&gram, None);
            if h <= threshold {
                continue;
            }
            // grid search in labeling order; a single remaining labeled
            // sample has nothing to disagree with and meets the threshold
            let without = |r: usize| {
                if labeled.len() <= 2 {
                    0.0
                } else {
                    entropy_from_log_gram(&gram, Some(r))
                }
            };
            let (r, trigger) = match (0..labeled.len()).find(|&r| without(r) <= threshold) {
                Some(r) => (r, SplitTrigger::EntropyThreshold),
                None => {
                    let r = (0..labeled.len())
                        .min_by(|&x, &y| without(x).total_cmp(&without(y)).then(x.cmp(&y)))
                        .expect("non-empty");
                    warn!(
                        "cluster {id}: no single removal brings entropy {h:.4} under {threshold:.4}; \
                         splitting on `{}`",
                        view.ids[labeled[r]]
                    );
                    (r, SplitTrigger::EntropyFallback)
                }
            };
            let seed_sample = labeled[r];
            let new_cluster_id = self.redistribute(id, seed_sample, view)?;
            events.push(SplitEvent {
                cluster_id: id,
                new_cluster_id,
                seed_sample,
                trigger,
            });
        }
        Ok(events)
    }

    pub fn summaries(
        &self,
        view: &PointView<'_>,
        params: Option<&EntropyParams>,
    ) -> Result<Vec<ClusterSummary>> {
        self.clusters
            .iter()
            .map(|c| {
                let entropy = match params {
                    Some(p) => self.cluster_entropy(c.id, view, p)?,
                    None => None,
                };
                Ok(ClusterSummary {
                    cluster_id: c.id,
                    size: c.size(),
                    labeled_count: c.labeled.len(),
                    representative_id: view.ids[c.representative].clone(),
                    entropy,
                })
            })
            .collect()
    }
}
