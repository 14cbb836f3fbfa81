//! Append-only NDJSON session journal.
//!
//! One JSON object per line, tagged by `event`. The first line is always
//! `session_created`. A session is recovered by re-driving a fresh
//! [`Session`] through the recorded events; every `batch_issued` and
//! `round_completed` line must match what the session reproduces, so a
//! journal that was edited or written against a different dataset is
//! refused instead of silently diverging.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use crm_active::config::RunConfig;
use crm_active::dataset::{Dataset, DatasetFormat};
use crm_active::engine::{RoundMetrics, Session, Strategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        dataset_path: PathBuf,
        format: DatasetFormat,
        /// The config as submitted; derived values are recomputed on replay.
        config: RunConfig,
        strategy: Strategy,
        timestamp: DateTime<Utc>,
    },
    BatchIssued {
        round: usize,
        sample_ids: Vec<String>,
        timestamp: DateTime<Utc>,
    },
    LabelSubmitted {
        round: usize,
        sample_id: String,
        concepts: Vec<String>,
        timestamp: DateTime<Utc>,
    },
    RoundCompleted {
        round: usize,
        metrics: RoundMetrics,
        timestamp: DateTime<Utc>,
    },
}

impl Event {
    fn name(&self) -> &'static str {
        match self {
            Event::SessionCreated { .. } => "session_created",
            Event::BatchIssued { .. } => "batch_issued",
            Event::LabelSubmitted { .. } => "label_submitted",
            Event::RoundCompleted { .. } => "round_completed",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal event {line} is unreadable: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("journal event {line} ({event}) failed to replay: {reason}")]
    Replay {
        line: usize,
        event: &'static str,
        reason: String,
    },
    #[error("journal is empty")]
    Empty,
}

pub struct JournalWriter {
    file: File,
    path: PathBuf,
}

impl JournalWriter {
    /// Creates a new journal; fails if the file already exists.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)?;
        Ok(JournalWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn open_append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(JournalWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event line and syncs it to disk.
    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, JournalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// A session rebuilt from its journal.
pub struct Replayed {
    pub session_id: String,
    pub session: Session,
    pub dataset_path: PathBuf,
    /// Round of the last batch that has a `batch_issued` line.
    pub journaled_batch: Option<usize>,
}

/// Re-drives a session through every event of the journal at `path`.
pub fn replay(path: &Path) -> Result<Replayed, JournalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut replayed: Option<Replayed> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
            line: line_no,
            reason: e.to_string(),
        })?;
        let fail = |reason: String| JournalError::Replay {
            line: line_no,
            event: event.name(),
            reason,
        };
        match (&mut replayed, &event) {
            (
                None,
                Event::SessionCreated {
                    session_id,
                    dataset_path,
                    format,
                    config,
                    strategy,
                    ..
                },
            ) => {
                let dataset =
                    Dataset::load(dataset_path, *format).map_err(|e| fail(e.to_string()))?;
                let session = Session::start(Arc::new(dataset), config.clone(), *strategy)
                    .map_err(|e| fail(e.to_string()))?;
                replayed = Some(Replayed {
                    session_id: session_id.clone(),
                    session,
                    dataset_path: dataset_path.clone(),
                    journaled_batch: None,
                });
            }
            (None, _) => return Err(fail("journal must start with session_created".into())),
            (Some(_), Event::SessionCreated { .. }) => {
                return Err(fail("duplicate session_created".into()))
            }
            (
                Some(r),
                Event::BatchIssued {
                    round, sample_ids, ..
                },
            ) => {
                let session = &mut r.session;
                let batch = session
                    .issue_batch()
                    .map_err(|e| fail(e.to_string()))?
                    .clone();
                let ids: Vec<String> = batch
                    .samples
                    .iter()
                    .map(|&s| session.ids()[s].clone())
                    .collect();
                let issued_round = batch.round;
                if issued_round != *round || &ids != sample_ids {
                    return Err(fail(format!(
                        "recorded batch for round {round} differs from the reproduced batch for round {issued_round}"
                    )));
                }
                r.journaled_batch = Some(*round);
            }
            (
                Some(r),
                Event::LabelSubmitted {
                    round,
                    sample_id,
                    concepts,
                    ..
                },
            ) => {
                let session = &mut r.session;
                let pending_round = session.pending().map(|p| p.round);
                if pending_round != Some(*round) {
                    return Err(fail(format!(
                        "label for round {round} but the pending round is {pending_round:?}"
                    )));
                }
                let idx = session
                    .dataset()
                    .index_of(sample_id)
                    .ok_or_else(|| fail(format!("unknown sample `{sample_id}`")))?;
                let labels = session
                    .dataset()
                    .label_set(concepts)
                    .map_err(|e| fail(e.to_string()))?;
                session
                    .submit_label(idx, labels)
                    .map_err(|e| fail(e.to_string()))?;
            }
            (Some(r), Event::RoundCompleted { round, metrics, .. }) => {
                let got = r.session.advance().map_err(|e| fail(e.to_string()))?;
                if got.round != *round || got != metrics {
                    return Err(fail(format!(
                        "recorded metrics for round {round} differ from the reproduced round {}",
                        got.round
                    )));
                }
            }
        }
    }
    replayed.ok_or(JournalError::Empty)
}
