use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use activeslice_core::corpus::{Dataset, SliceVector};
use activeslice_core::discovery::{Discovery, DiscoveryConfig, DiscoveryError};
use serde::{Deserialize, Serialize};

use crate::ApiError;

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session: String,
        config: DiscoveryConfig,
        at_ms: u64,
    },
    Label {
        id: String,
        answers: SliceVector,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
        at_ms: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Complete,
}

/// An interactive run: the loop state plus the answers collected so far for
/// the pending batch.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub run: Discovery,
    /// Aligned with the pending batch rows.
    pub answers: Vec<Option<SliceVector>>,
    pub notes: Vec<(String, String)>,
    log_path: PathBuf,
}

/// What a successful submission changed.
#[derive(Debug, Clone, Copy)]
pub struct Submitted {
    pub batch_complete: bool,
}

impl Session {
    pub fn create(
        train: &Dataset,
        test: &Dataset,
        id: String,
        config: DiscoveryConfig,
        at_ms: u64,
        state_dir: &Path,
    ) -> Result<Session, DiscoveryError> {
        let mut run = Discovery::start(train, test, config)?;
        let pending = run.next_batch(train)?.len();
        Ok(Session {
            log_path: state_dir.join(format!("{id}.jsonl")),
            id,
            created_ms: at_ms,
            updated_ms: at_ms,
            run,
            answers: vec![None; pending],
            notes: Vec::new(),
        })
    }

    pub fn status(&self) -> Status {
        if self.run.is_complete() {
            Status::Complete
        } else {
            Status::Active
        }
    }

    pub fn pending_rows(&self) -> &[usize] {
        self.run
            .state()
            .pending
            .as_ref()
            .map_or(&[], |p| &p.rows)
    }

    /// Position in the pending batch of the first unanswered item.
    pub fn next_position(&self) -> Option<usize> {
        self.answers.iter().position(|a| a.is_none())
    }

    /// Validates and applies one answer, returning the updated session. When
    /// it completes the batch the model is retrained and the next batch is
    /// selected. `self` is never modified.
    pub fn submit(
        &self,
        train: &Dataset,
        test: &Dataset,
        id: &str,
        answers: &SliceVector,
        note: Option<&str>,
        at_ms: u64,
    ) -> Result<(Session, Submitted), ApiError> {
        let row = self
            .run
            .row_of(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown example {id:?}")))?;
        let already_annotated = self.run.state().annotated.iter().any(|a| a.row == row);
        let position = self.pending_rows().iter().position(|&r| r == row);
        if already_annotated || position.is_some_and(|p| self.answers[p].is_some()) {
            return Err(ApiError::conflict(format!("example {id:?} is already answered")));
        }
        let position =
            position.ok_or_else(|| ApiError::not_found(format!("example {id:?} is not pending")))?;
        let k = train.k();
        if answers.len() != k || answers.iter().any(|&v| v > 1) {
            return Err(ApiError::bad_request(format!(
                "answers must hold {k} values in {{0,1}}"
            )));
        }

        let mut next = self.clone();
        next.updated_ms = at_ms;
        next.answers[position] = Some(answers.clone());
        if let Some(n) = note {
            next.notes.push((id.to_string(), n.to_string()));
        }
        if next.next_position().is_some() {
            return Ok((next, Submitted { batch_complete: false }));
        }
        let pairs: Vec<(String, SliceVector)> = next
            .pending_rows()
            .iter()
            .zip(&next.answers)
            .map(|(&r, a)| (train.records[r].id.clone(), a.clone().expect("batch complete")))
            .collect();
        next.run.apply(train, test, &pairs).map_err(ApiError::internal)?;
        let pending = next.run.next_batch(train).map_err(ApiError::internal)?.len();
        next.answers = vec![None; pending];
        Ok((next, Submitted { batch_complete: true }))
    }

    pub fn append(&self, event: &Event) -> std::io::Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log_path)?;
        let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    /// Rebuilds a session from its event log.
    pub fn replay(train: &Dataset, test: &Dataset, path: &Path) -> Result<Session, ApiError> {
        let file = File::open(path).map_err(ApiError::internal)?;
        let state_dir = path.parent().unwrap_or(Path::new("."));
        let mut session: Option<Session> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(ApiError::internal)?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(&line).map_err(|e| {
                ApiError::internal(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            session = Some(match (session, event) {
                (None, Event::Created { session, config, at_ms }) => {
                    Session::create(train, test, session, config, at_ms, state_dir)
                        .map_err(ApiError::internal)?
                }
                (Some(s), Event::Label { id, answers, note, at_ms }) => {
                    s.submit(train, test, &id, &answers, note.as_deref(), at_ms)?.0
                }
                _ => {
                    return Err(ApiError::internal(format!(
                        "{}:{}: unexpected event",
                        path.display(),
                        i + 1
                    )))
                }
            });
        }
        session.ok_or_else(|| ApiError::internal(format!("{}: empty log", path.display())))
    }
}
