//! Live sessions backed by journals under `<data-dir>/sessions/`.
//!
//! Each session sits behind its own mutex, so requests to one session are
//! serialized while different sessions proceed in parallel. Every state
//! change is journaled before it is acknowledged.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use crm_active::clustering::ClusterSummary;
use crm_active::config::RunConfig;
use crm_active::dataset::{Dataset, DatasetFormat};
use crm_active::engine::{RoundMetrics, Session, SessionStatus, Strategy, SubmitOutcome};
use serde::{Deserialize, Serialize};

use crate::journal::{replay, Event, JournalError, JournalWriter};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("session `{id}` could not be recovered: {reason}")]
    Unavailable { id: String, reason: String },
    #[error("journal write failed: {0}")]
    Journal(String),
    #[error("{0}")]
    Internal(String),
}

impl From<crm_active::Error> for StoreError {
    fn from(e: crm_active::Error) -> Self {
        use crm_active::Error as E;
        match e {
            E::Precondition(m) => StoreError::Conflict(m),
            E::Io(_) | E::Json(_) | E::Csv(_) => StoreError::BadRequest(e.to_string()),
            other if other.is_data_error() => StoreError::BadRequest(other.to_string()),
            E::InvalidParameter(_) => StoreError::BadRequest(e.to_string()),
            other => StoreError::Internal(other.to_string()),
        }
    }
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

struct Entry {
    session: Session,
    journal: JournalWriter,
    journaled_batch: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    pub dataset_path: PathBuf,
    #[serde(default)]
    pub format: Option<DatasetFormat>,
    #[serde(default)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSummary {
    pub round: usize,
    pub size: usize,
    pub submitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub status: SessionStatus,
    pub round: usize,
    pub labeled_count: usize,
    pub unlabeled_count: usize,
    pub pending: Option<PendingSummary>,
    pub latest: Option<RoundMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub concept: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub features: Vec<f64>,
    /// Labels already submitted for this round, if any.
    pub submitted: Option<Vec<String>>,
    pub model_suggestions: Vec<Suggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub round: usize,
    pub samples: Vec<BatchItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub sample_id: String,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub sample_id: String,
    pub outcome: SubmitOutcome,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvanceResult {
    pub status: SessionStatus,
    pub metrics: RoundMetrics,
}

pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
    failed: RwLock<BTreeMap<String, String>>,
}

fn info(id: &str, session: &Session) -> SessionInfo {
    let st = session.state();
    SessionInfo {
        session_id: id.to_string(),
        status: st.status,
        round: st.round,
        labeled_count: st.labeled.len(),
        unlabeled_count: st.unlabeled.len(),
        pending: st.pending.as_ref().map(|p| PendingSummary {
            round: p.round,
            size: p.samples.len(),
            submitted: p.submitted.len(),
        }),
        latest: st.history.last().cloned(),
    }
}

impl SessionStore {
    /// Opens `dir`, replaying every journal found. Sessions whose journal
    /// fails to replay are reported through [`SessionStore::failures`].
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        let sessions_dir = dir.join("sessions");
        fs::create_dir_all(&sessions_dir)?;
        let mut sessions = BTreeMap::new();
        let mut failed = BTreeMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "ndjson"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            match Self::recover(&path) {
                Ok(entry) => {
                    log::info!("recovered session {id} at round {}", entry.session.round());
                    sessions.insert(id, Arc::new(Mutex::new(entry)));
                }
                Err(e) => {
                    log::error!("session {id}: {e}");
                    failed.insert(id, e.to_string());
                }
            }
        }
        Ok(SessionStore {
            dir: sessions_dir,
            sessions: RwLock::new(sessions),
            failed: RwLock::new(failed),
        })
    }

    fn recover(path: &Path) -> Result<Entry, JournalError> {
        let r = replay(path)?;
        Ok(Entry {
            session: r.session,
            journal: JournalWriter::open_append(path)?,
            journaled_batch: r.journaled_batch,
        })
    }

    pub fn journal_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.ndjson"))
    }

    pub fn failures(&self) -> BTreeMap<String, String> {
        self.failed.read().expect("lock").clone()
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .expect("lock")
            .keys()
            .cloned()
            .collect()
    }

    fn entry(&self, id: &str) -> StoreResult<Arc<Mutex<Entry>>> {
        if let Some(e) = self.sessions.read().expect("lock").get(id) {
            return Ok(e.clone());
        }
        if let Some(reason) = self.failed.read().expect("lock").get(id) {
            return Err(StoreError::Unavailable {
                id: id.to_string(),
                reason: reason.clone(),
            });
        }
        Err(StoreError::NotFound(id.to_string()))
    }

    /// Runs `f` under the session's lock. A failed journal write takes the
    /// session offline: memory may be ahead of disk, and the journal is the
    /// source of truth on the next start.
    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Entry) -> StoreResult<T>) -> StoreResult<T> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().unwrap_or_else(|p| p.into_inner());
        match f(&mut guard) {
            Err(StoreError::Journal(reason)) => {
                log::error!("session {id} taken offline: {reason}");
                self.sessions.write().expect("lock").remove(id);
                self.failed
                    .write()
                    .expect("lock")
                    .insert(id.to_string(), reason.clone());
                Err(StoreError::Journal(reason))
            }
            other => other,
        }
    }

    pub fn create(&self, req: CreateRequest) -> StoreResult<SessionInfo> {
        let format = req
            .format
            .unwrap_or_else(|| DatasetFormat::from_path(&req.dataset_path));
        let dataset = Dataset::load(&req.dataset_path, format)
            .map_err(|e| StoreError::BadRequest(e.to_string()))?;
        let strategy = Strategy::CrmActive;
        let session = Session::start(Arc::new(dataset), req.config.clone(), strategy)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.journal_path(&id);
        let mut journal =
            JournalWriter::create(&path).map_err(|e| StoreError::Internal(e.to_string()))?;
        journal
            .append(&Event::SessionCreated {
                session_id: id.clone(),
                dataset_path: req.dataset_path,
                format,
                config: req.config,
                strategy,
                timestamp: Utc::now(),
            })
            .map_err(|e| StoreError::Internal(e.to_string()))?;
        let out = info(&id, &session);
        self.sessions.write().expect("lock").insert(
            id,
            Arc::new(Mutex::new(Entry {
                session,
                journal,
                journaled_batch: None,
            })),
        );
        Ok(out)
    }

    pub fn info(&self, id: &str) -> StoreResult<SessionInfo> {
        self.with(id, |e| Ok(info(id, &e.session)))
    }

    /// The pending batch, selecting a new one if none is open.
    pub fn batch(&self, id: &str) -> StoreResult<BatchView> {
        self.with(id, |e| {
            let batch = e.session.issue_batch()?.clone();
            if e.journaled_batch != Some(batch.round) {
                let sample_ids = batch
                    .samples
                    .iter()
                    .map(|&s| e.session.ids()[s].clone())
                    .collect();
                e.journal
                    .append(&Event::BatchIssued {
                        round: batch.round,
                        sample_ids,
                        timestamp: Utc::now(),
                    })
                    .map_err(|err| StoreError::Journal(err.to_string()))?;
                e.journaled_batch = Some(batch.round);
            }
            let ds = e.session.dataset().clone();
            let samples = batch
                .samples
                .iter()
                .map(|&s| {
                    let model_suggestions = e
                        .session
                        .suggestions(s)?
                        .into_iter()
                        .map(|(concept, probability)| Suggestion {
                            concept,
                            probability,
                        })
                        .collect();
                    Ok(BatchItem {
                        id: ds.sample(s).id.clone(),
                        features: ds.sample(s).raw_features.clone(),
                        submitted: batch.submitted.get(&s).map(|l| ds.concept_names(l)),
                        model_suggestions,
                    })
                })
                .collect::<StoreResult<Vec<_>>>()?;
            Ok(BatchView {
                round: batch.round,
                samples,
            })
        })
    }

    pub fn submit(&self, id: &str, req: LabelRequest) -> StoreResult<LabelAck> {
        self.with(id, |e| {
            let ds = e.session.dataset().clone();
            let pending = e
                .session
                .pending()
                .ok_or_else(|| StoreError::Conflict("no batch is pending".into()))?;
            let idx = ds
                .index_of(&req.sample_id)
                .filter(|i| pending.samples.contains(i))
                .ok_or_else(|| {
                    StoreError::Conflict(format!(
                        "sample `{}` is not in the current batch",
                        req.sample_id
                    ))
                })?;
            let labels = ds.label_set(&req.concepts)?;
            let round = pending.round;
            let duplicate = pending.submitted.get(&idx) == Some(&labels);
            if !duplicate {
                e.journal
                    .append(&Event::LabelSubmitted {
                        round,
                        sample_id: req.sample_id.clone(),
                        concepts: ds.concept_names(&labels),
                        timestamp: Utc::now(),
                    })
                    .map_err(|err| StoreError::Journal(err.to_string()))?;
            }
            let outcome = e.session.submit_label(idx, labels)?;
            let p = e.session.pending().expect("still pending");
            Ok(LabelAck {
                sample_id: req.sample_id,
                outcome,
                remaining: p.samples.len() - p.submitted.len(),
            })
        })
    }

    pub fn advance(&self, id: &str) -> StoreResult<AdvanceResult> {
        self.with(id, |e| {
            let metrics = e.session.advance()?.clone();
            e.journal
                .append(&Event::RoundCompleted {
                    round: metrics.round,
                    metrics: metrics.clone(),
                    timestamp: Utc::now(),
                })
                .map_err(|err| StoreError::Journal(err.to_string()))?;
            Ok(AdvanceResult {
                status: e.session.status(),
                metrics,
            })
        })
    }

    pub fn metrics(&self, id: &str) -> StoreResult<Vec<RoundMetrics>> {
        self.with(id, |e| Ok(e.session.history().to_vec()))
    }

    pub fn clusters(&self, id: &str) -> StoreResult<Vec<ClusterSummary>> {
        self.with(id, |e| Ok(e.session.cluster_summaries()?))
    }

    pub fn vocabulary(&self, id: &str) -> StoreResult<Vec<String>> {
        self.with(id, |e| {
            Ok(e.session
                .dataset()
                .vocabulary()
                .iter()
                .map(|c| c.name.clone())
                .collect())
        })
    }

    /// A copy of the full engine state, for inspection and tests.
    pub fn snapshot(&self, id: &str) -> StoreResult<crm_active::engine::SessionState> {
        self.with(id, |e| Ok(e.session.state().clone()))
    }
}
