//! The active-learning loop.
//!
//! A [`Session`] is a small state machine so the same code serves the
//! simulated ground-truth oracle and a human labeling through the HTTP
//! service:
//!
//! ```text
//! start ──► Running ──issue_batch──► AwaitingLabels ──advance──► Running ... ──► Finished
//! ```
//!
//! `start` clusters `L0 ∪ U`, enforces label sharing over `L0`, fixes the
//! smoothing parameters, trains and evaluates round 0. Each `advance`
//! reveals the pending batch, refines the clusters, retrains and evaluates
//! the next round. Identical inputs give bit-identical sessions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterState, ClusterSummary, EntropyParams, PointView, SplitEvent};
use crate::config::RunConfig;
use crate::dataset::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_annotation, evaluate_retrieval, TestItem};
use crate::kernels::{estimate_gamma, median_bandwidth, KernelParams};
use crate::relevance::{select_smoothing, RelevanceModel, TrainingPoint};
use crate::selection::{
    score_unlabeled, select_batch, select_batch_random, InfoScore, ScoringParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    /// Informativeness ranking with cluster refinement.
    CrmActive,
    /// Uniform random batches; no clustering.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingLabels,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub labeled_count: usize,
    pub annotation_ap: f64,
    pub retrieval_ap: f64,
    pub per_concept_precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingRecord {
    pub round: usize,
    pub sample_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub round: usize,
    pub score: InfoScore,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub round: usize,
    pub samples: Vec<usize>,
    /// Labels submitted so far, by sample index.
    pub submitted: BTreeMap<usize, LabelSet>,
}

impl PendingBatch {
    pub fn is_complete(&self) -> bool {
        self.samples.iter().all(|s| self.submitted.contains_key(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Accepted,
    /// Identical to what was already recorded for this round.
    Duplicate,
    /// Replaced an earlier, different submission.
    Replaced,
}

/// Everything that evolves during a session; compared field-by-field in
/// replay tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    /// Config with `sigma`, `lambda`, `beta` and `k_max` resolved.
    pub config: RunConfig,
    pub strategy: Strategy,
    pub status: SessionStatus,
    /// Index of the last evaluated round.
    pub round: usize,
    /// Labels known to the learner, by sample index.
    pub known: Vec<Option<LabelSet>>,
    /// Labeled training samples in labeling order.
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub clusters: Option<ClusterState>,
    pub gamma: Vec<f64>,
    pub model: RelevanceModel,
    pub history: Vec<RoundMetrics>,
    pub labeling_order: Vec<LabelingRecord>,
    pub pending: Option<PendingBatch>,
    pub scores: Vec<ScoreRow>,
    pub splits: Vec<(usize, SplitEvent)>,
}

pub struct Session {
    dataset: Arc<Dataset>,
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    state: SessionState,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("status", &self.state.status)
            .field("round", &self.state.round)
            .field("labeled", &self.state.labeled.len())
            .field("unlabeled", &self.state.unlabeled.len())
            .finish()
    }
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add(round as u64)
}

impl Session {
    pub fn start(dataset: Arc<Dataset>, config: RunConfig, strategy: Strategy) -> Result<Self> {
        config.validate(dataset.vocab_size())?;
        let splits = dataset.splits().clone();
        if splits.initial_labeled.is_empty() {
            return Err(Error::Precondition("initial labeled set is empty".into()));
        }
        if splits.test.is_empty() {
            return Err(Error::Precondition("test set is empty".into()));
        }
        if config.retrieval_depth > splits.test.len() {
            return Err(Error::InvalidParameter(format!(
                "retrieval depth {} exceeds the {} test samples",
                config.retrieval_depth,
                splits.test.len()
            )));
        }
        let ids = dataset.ids();
        let features = dataset.feature_table();
        let universe: Vec<usize> = splits.training().collect();

        let mut config = config;
        let sigma = config.sigma.unwrap_or_else(|| {
            let pts: Vec<&[f64]> = universe.iter().map(|&i| features[i].as_slice()).collect();
            median_bandwidth(&pts, config.seed)
        });
        config.sigma = Some(sigma);
        let k_max = config
            .k_max
            .unwrap_or_else(|| (universe.len() as f64).sqrt().ceil() as usize);
        config.k_max = Some(k_max);

        let mut known: Vec<Option<LabelSet>> = vec![None; dataset.len()];
        for &i in &splits.initial_labeled {
            known[i] = dataset.sample(i).labels.clone();
        }
        let vocabulary: Vec<String> = dataset
            .vocabulary()
            .iter()
            .map(|c| c.name.clone())
            .collect();

        if config.lambda.is_none() || config.beta.is_none() {
            let points = training_points(&splits.initial_labeled, &ids, &features, &known)?;
            let (lambda, beta) = select_smoothing(
                &points,
                &vocabulary,
                Some(dataset.normalization()),
                config.annotation_length,
                config.cv_folds,
                config.seed,
            )?;
            config.lambda.get_or_insert(lambda);
            config.beta.get_or_insert(beta);
        }

        let clusters = match strategy {
            Strategy::CrmActive => {
                let labels = known.clone();
                let view = PointView {
                    ids: &ids,
                    features: &features,
                    labels: &labels,
                };
                let (mut state, _) = ClusterState::initial(
                    &view,
                    &universe,
                    &splits.initial_labeled,
                    config.k_min,
                    k_max,
                    config.kmeans_restarts,
                    config.seed,
                )?;
                state.enforce_label_sharing(&splits.initial_labeled, &view)?;
                Some(state)
            }
            Strategy::Random { .. } => None,
        };

        let placeholder = RelevanceModel::train(
            training_points(&splits.initial_labeled[..1], &ids, &features, &known)?,
            vocabulary,
            0.5,
            1.0,
        )?;
        let status = if splits.unlabeled.is_empty() {
            SessionStatus::Finished
        } else {
            SessionStatus::Running
        };
        let mut session = Session {
            dataset,
            ids,
            features,
            state: SessionState {
                config,
                strategy,
                status,
                round: 0,
                known,
                labeled: splits.initial_labeled.clone(),
                unlabeled: splits.unlabeled.clone(),
                clusters,
                gamma: Vec::new(),
                model: placeholder,
                history: Vec::new(),
                labeling_order: Vec::new(),
                pending: None,
                scores: Vec::new(),
                splits: Vec::new(),
            },
        };
        session.train_and_evaluate()?;
        Ok(session)
    }

    /// Retrains on the current labeled set, evaluates, and refreshes the
    /// concept probabilities and entropy threshold for the next refinement.
    fn train_and_evaluate(&mut self) -> Result<()> {
        let st = &mut self.state;
        let points = training_points(&st.labeled, &self.ids, &self.features, &st.known)?;
        st.model = RelevanceModel::train(
            points,
            self.dataset
                .vocabulary()
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            st.config.lambda.expect("resolved at start"),
            st.config.beta.expect("resolved at start"),
        )?
        .with_normalization(self.dataset.normalization().clone())?;

        let test: Vec<TestItem<'_>> = self
            .dataset
            .splits()
            .test
            .iter()
            .map(|&i| {
                let s = self.dataset.sample(i);
                TestItem {
                    id: &s.id,
                    features: &s.features,
                    labels: s.labels.as_ref().expect("validated at load"),
                }
            })
            .collect();
        let annotation = evaluate_annotation(&st.model, &test, st.config.annotation_length)?;
        let retrieval = evaluate_retrieval(&st.model, &test, st.config.retrieval_depth)?;
        st.history.push(RoundMetrics {
            round: st.round,
            labeled_count: st.labeled.len(),
            annotation_ap: annotation.ap,
            retrieval_ap: retrieval.ap,
            per_concept_precision: annotation.per_concept_precision,
        });

        st.gamma = estimate_gamma(st.labeled.iter().filter_map(|&i| st.known[i].as_ref()))?;
        if let Some(clusters) = st.clusters.as_mut() {
            let params = EntropyParams {
                kernel: KernelParams::new(st.config.sigma.expect("resolved"), st.gamma.clone())?,
                normalized: st.config.normalize_entropy_kernel,
            };
            let view = PointView {
                ids: &self.ids,
                features: &self.features,
                labels: &st.known,
            };
            clusters.update_h_worst(&view, &params)?;
        }
        Ok(())
    }

    fn entropy_params(&self) -> Result<EntropyParams> {
        Ok(EntropyParams {
            kernel: KernelParams::new(
                self.state.config.sigma.expect("resolved"),
                self.state.gamma.clone(),
            )?,
            normalized: self.state.config.normalize_entropy_kernel,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn status(&self) -> SessionStatus {
        self.state.status
    }

    pub fn round(&self) -> usize {
        self.state.round
    }

    pub fn history(&self) -> &[RoundMetrics] {
        &self.state.history
    }

    pub fn model(&self) -> &RelevanceModel {
        &self.state.model
    }

    pub fn pending(&self) -> Option<&PendingBatch> {
        self.state.pending.as_ref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Selects the next batch, or returns the one already pending.
    pub fn issue_batch(&mut self) -> Result<&PendingBatch> {
        if self.state.pending.is_some() {
            return Ok(self.state.pending.as_ref().expect("checked"));
        }
        if self.state.status == SessionStatus::Finished {
            return Err(Error::Precondition("session is finished".into()));
        }
        let st = &self.state;
        let k = st.config.batch_size;
        let round = st.round;
        let samples = match (st.strategy, &st.clusters) {
            (Strategy::CrmActive, Some(clusters)) => {
                let params = ScoringParams {
                    annotation_length: st.config.annotation_length,
                    epsilon: st.config.epsilon,
                    sigma: st.config.sigma.expect("resolved"),
                    weights: st.config.weights,
                    rescale_uncertainty: st.config.rescale_uncertainty,
                };
                let scores = score_unlabeled(
                    &st.unlabeled,
                    &self.ids,
                    &self.features,
                    &st.model,
                    clusters,
                    &params,
                )?;
                let batch = select_batch(&scores, k);
                let rows: Vec<ScoreRow> = scores
                    .into_iter()
                    .map(|score| ScoreRow {
                        round,
                        selected: batch.contains(&score.sample),
                        score,
                    })
                    .collect();
                self.state.scores.extend(rows);
                batch
            }
            (Strategy::Random { seed }, _) => {
                select_batch_random(&st.unlabeled, k, round_seed(seed, round))
            }
            (Strategy::CrmActive, None) => {
                return Err(Error::Precondition("cluster state missing".into()))
            }
        };
        self.state.pending = Some(PendingBatch {
            round,
            samples,
            submitted: BTreeMap::new(),
        });
        self.state.status = SessionStatus::AwaitingLabels;
        Ok(self.state.pending.as_ref().expect("just set"))
    }

    /// Records labels for a member of the pending batch.
    pub fn submit_label(&mut self, sample: usize, labels: LabelSet) -> Result<SubmitOutcome> {
        let d = self.dataset.vocab_size();
        if labels.len() != d {
            return Err(Error::dims(d, labels.len()));
        }
        let pending = self
            .state
            .pending
            .as_mut()
            .ok_or_else(|| Error::Precondition("no batch is pending".into()))?;
        if !pending.samples.contains(&sample) {
            return Err(Error::Precondition(format!(
                "sample `{}` is not in the current batch",
                self.ids.get(sample).map(String::as_str).unwrap_or("?")
            )));
        }
        Ok(match pending.submitted.insert(sample, labels.clone()) {
            None => SubmitOutcome::Accepted,
            Some(prev) if prev == labels => SubmitOutcome::Duplicate,
            Some(_) => SubmitOutcome::Replaced,
        })
    }

    /// Closes the pending round once every batch member is labeled:
    /// reveals the labels, refines clusters, retrains and evaluates.
    pub fn advance(&mut self) -> Result<&RoundMetrics> {
        let pending = match &self.state.pending {
            Some(p) if p.is_complete() => self.state.pending.take().expect("checked"),
            Some(p) => {
                let missing = p.samples.len() - p.submitted.len();
                return Err(Error::Precondition(format!(
                    "{missing} batch member(s) still need labels"
                )));
            }
            None => return Err(Error::Precondition("no batch is pending".into())),
        };
        let params = self.entropy_params()?;
        let st = &mut self.state;
        for &s in &pending.samples {
            st.known[s] = Some(pending.submitted[&s].clone());
            st.labeled.push(s);
            st.labeling_order.push(LabelingRecord {
                round: pending.round,
                sample_id: self.ids[s].clone(),
            });
        }
        st.unlabeled.retain(|u| !pending.samples.contains(u));
        if let Some(clusters) = st.clusters.as_mut() {
            let view = PointView {
                ids: &self.ids,
                features: &self.features,
                labels: &st.known,
            };
            let events = clusters.refine_after_batch(&pending.samples, &view, &params)?;
            st.splits
                .extend(events.into_iter().map(|e| (pending.round, e)));
        }
        st.round += 1;
        st.status = if st.unlabeled.is_empty() {
            SessionStatus::Finished
        } else {
            SessionStatus::Running
        };
        self.train_and_evaluate()?;
        Ok(self.state.history.last().expect("just evaluated"))
    }

    pub fn cluster_summaries(&self) -> Result<Vec<ClusterSummary>> {
        let Some(clusters) = &self.state.clusters else {
            return Ok(Vec::new());
        };
        let view = PointView {
            ids: &self.ids,
            features: &self.features,
            labels: &self.state.known,
        };
        clusters.summaries(&view, Some(&self.entropy_params()?))
    }

    /// Top-k concepts the current model suggests for a sample.
    pub fn suggestions(&self, sample: usize) -> Result<Vec<(String, f64)>> {
        let ranked = self
            .state
            .model
            .annotate(&self.features[sample], self.state.config.annotation_length)?;
        Ok(ranked
            .into_iter()
            .map(|(w, p)| (self.dataset.vocabulary()[w].name.clone(), p))
            .collect())
    }

    /// The emitted labeling order: samples of the initial unlabeled pool in
    /// the order they were labeled.
    pub fn labeling_order(&self) -> &[LabelingRecord] {
        &self.state.labeling_order
    }
}

fn training_points(
    indices: &[usize],
    ids: &[String],
    features: &[Vec<f64>],
    known: &[Option<LabelSet>],
) -> Result<Vec<TrainingPoint>> {
    indices
        .iter()
        .map(|&i| {
            let labels = known[i].clone().ok_or_else(|| {
                Error::Precondition(format!("training sample `{}` has no labels", ids[i]))
            })?;
            Ok(TrainingPoint {
                id: ids[i].clone(),
                features: features[i].clone(),
                labels,
            })
        })
        .collect()
}

/// Source of labels for selected samples.
pub trait Oracle {
    fn reveal(&mut self, dataset: &Dataset, samples: &[usize]) -> Result<Vec<LabelSet>>;
}

/// Answers from the dataset's hidden ground truth.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroundTruthOracle;

impl Oracle for GroundTruthOracle {
    fn reveal(&mut self, dataset: &Dataset, samples: &[usize]) -> Result<Vec<LabelSet>> {
        samples
            .iter()
            .map(|&i| {
                dataset.sample(i).labels.clone().ok_or_else(|| {
                    Error::Oracle(format!("no ground truth for `{}`", dataset.sample(i).id))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub history: Vec<RoundMetrics>,
    pub labeling_order: Vec<LabelingRecord>,
    pub scores: Vec<ScoreRow>,
    pub model: RelevanceModel,
    pub config: RunConfig,
}

/// Runs a session to completion, drawing labels from `oracle`.
pub fn run_session_with(
    dataset: Arc<Dataset>,
    config: RunConfig,
    strategy: Strategy,
    oracle: &mut dyn Oracle,
) -> Result<SessionOutcome> {
    let mut session = Session::start(dataset.clone(), config, strategy)?;
    while session.status() != SessionStatus::Finished {
        let batch = session.issue_batch()?.samples.clone();
        let labels = oracle.reveal(&dataset, &batch)?;
        if labels.len() != batch.len() {
            return Err(Error::Oracle(format!(
                "oracle answered {} of {} samples",
                labels.len(),
                batch.len()
            )));
        }
        for (s, l) in batch.into_iter().zip(labels) {
            session.submit_label(s, l)?;
        }
        session.advance()?;
    }
    let SessionState {
        history,
        labeling_order,
        scores,
        model,
        config,
        ..
    } = session.state;
    Ok(SessionOutcome {
        history,
        labeling_order,
        scores,
        model,
        config,
    })
}

/// CRMActive with the given oracle.
pub fn run_session(
    dataset: Arc<Dataset>,
    config: RunConfig,
    oracle: &mut dyn Oracle,
) -> Result<SessionOutcome> {
    run_session_with(dataset, config, Strategy::CrmActive, oracle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub per_seed: Vec<(u64, Vec<RoundMetrics>)>,
    pub averaged: Vec<RoundMetrics>,
}

/// Random-selection runs, one per seed, averaged round by round.
pub fn run_baseline_random(
    dataset: Arc<Dataset>,
    config: RunConfig,
    seeds: &[u64],
) -> Result<BaselineOutcome> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one seed is required".into(),
        ));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let out = run_session_with(
            dataset.clone(),
            config.clone(),
            Strategy::Random { seed },
            &mut GroundTruthOracle,
        )?;
        per_seed.push((seed, out.history));
    }
    let averaged = average_histories(
        &per_seed
            .iter()
            .map(|(_, h)| h.as_slice())
            .collect::<Vec<_>>(),
    );
    Ok(BaselineOutcome { per_seed, averaged })
}

/// Pointwise mean of equally long metric histories.
pub fn average_histories(histories: &[&[RoundMetrics]]) -> Vec<RoundMetrics> {
    let n = histories.len() as f64;
    let rounds = histories.iter().map(|h| h.len()).min().unwrap_or(0);
    (0..rounds)
        .map(|r| {
            let first = &histories[0][r];
            let d = first.per_concept_precision.len();
            let mean = |f: &dyn Fn(&RoundMetrics) -> f64| {
                histories.iter().map(|h| f(&h[r])).sum::<f64>() / n
            };
            RoundMetrics {
                round: first.round,
                labeled_count: first.labeled_count,
                annotation_ap: mean(&|m| m.annotation_ap),
                retrieval_ap: mean(&|m| m.retrieval_ap),
                per_concept_precision: (0..d)
                    .map(|c| mean(&|m| m.per_concept_precision[c]))
                    .collect(),
            }
        })
        .collect()
}

/// `round,labeled_count,annotation_ap,retrieval_ap`
pub fn metrics_csv(history: &[RoundMetrics]) -> String {
    let mut out = String::from("round,labeled_count,annotation_ap,retrieval_ap\n");
    for m in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.round, m.labeled_count, m.annotation_ap, m.retrieval_ap
        );
    }
    out
}

/// `round,concept,precision`
pub fn per_concept_csv(history: &[RoundMetrics], vocabulary: &[String]) -> String {
    let mut out = String::from("round,concept,precision\n");
    for m in history {
        for (c, p) in vocabulary.iter().zip(&m.per_concept_precision) {
            let _ = writeln!(out, "{},{},{}", m.round, c, p);
        }
    }
    out
}

/// `round,sample_id,unct,den,div,info,selected`
pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("round,sample_id,unct,den,div,info,selected\n");
    for r in rows {
        let s = &r.score;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.round, s.sample_id, s.unct, s.den, s.div, s.info, r.selected as u8
        );
    }
    out
}

pub fn labeling_order_json(order: &[LabelingRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(order)?;
    s.push('\n');
    Ok(s)
}
