use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Verdict;
use triage_core::ingest::PatientRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryStatus {
    Waiting,
    InTreatment,
    Discharged,
}

impl EntryStatus {
    pub fn name(self) -> &'static str {
        match self {
            EntryStatus::Waiting => "waiting",
            EntryStatus::InTreatment => "in-treatment",
            EntryStatus::Discharged => "discharged",
        }
    }

    /// Only forward moves, one step at a time.
    pub fn can_become(self, next: EntryStatus) -> bool {
        matches!(
            (self, next),
            (EntryStatus::Waiting, EntryStatus::InTreatment) | (EntryStatus::InTreatment, EntryStatus::Discharged)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: u64,
    pub patient: PatientRecord,
    pub verdict: Verdict,
    pub arrival_ms: u64,
    pub status: EntryStatus,
}

impl QueueEntry {
    /// Urgent levels first, then arrival order.
    pub fn ordering_key(&self) -> (usize, u64, u64) {
        (self.verdict.level.code(), self.arrival_ms, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueueError {
    #[error("no queue entry {0}")]
    NotFound(u64),
    #[error("entry {id} cannot move from {} to {}", from.name(), to.name())]
    Transition {
        id: u64,
        from: EntryStatus,
        to: EntryStatus,
    },
    #[error("event log: {0}")]
    Log(String),
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum QueueEvent {
    Enqueued { entry: QueueEntry },
    Status { id: u64, status: EntryStatus },
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct TriageQueue {
    entries: BTreeMap<u64, QueueEntry>,
    next_id: u64,
}

impl TriageQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&QueueEntry> {
        self.entries.get(&id)
    }

    /// Builds the entry that [`TriageQueue::apply`] would add next.
    pub fn prepare(&self, patient: PatientRecord, verdict: Verdict, arrival_ms: u64) -> QueueEvent {
        QueueEvent::Enqueued {
            entry: QueueEntry {
                id: self.next_id + 1,
                patient,
                verdict,
                arrival_ms,
                status: EntryStatus::Waiting,
            },
        }
    }

    /// Checks a status change without applying it.
    pub fn check_status(&self, id: u64, status: EntryStatus) -> Result<QueueEvent, QueueError> {
        let entry = self.entries.get(&id).ok_or(QueueError::NotFound(id))?;
        if !entry.status.can_become(status) {
            return Err(QueueError::Transition {
                id,
                from: entry.status,
                to: status,
            });
        }
        Ok(QueueEvent::Status { id, status })
    }

    pub fn apply(&mut self, event: &QueueEvent) -> Result<&QueueEntry, QueueError> {
        match event {
            QueueEvent::Enqueued { entry } => {
                if entry.id <= self.next_id {
                    return Err(QueueError::Log(format!("entry id {} is not increasing", entry.id)));
                }
                self.next_id = entry.id;
                self.entries.insert(entry.id, entry.clone());
                Ok(&self.entries[&entry.id])
            }
            QueueEvent::Status { id, status } => {
                self.check_status(*id, *status)?;
                let entry = self.entries.get_mut(id).expect("checked above");
                entry.status = *status;
                Ok(entry)
            }
        }
    }

    pub fn ordered(&self) -> Vec<&QueueEntry> {
        let mut out: Vec<&QueueEntry> = self.entries.values().collect();
        out.sort_by_key(|e| e.ordering_key());
        out
    }
}

/// Append-only JSON-lines record of queue mutations.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens the log for appending and replays what it already holds.
    pub fn open(path: &Path) -> Result<(Self, TriageQueue), QueueError> {
        let io = |e: std::io::Error| QueueError::Log(format!("{}: {e}", path.display()));
        let mut queue = TriageQueue::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: QueueEvent = serde_json::from_str(&line)
                    .map_err(|e| QueueError::Log(format!("{} line {}: {e}", path.display(), n + 1)))?;
                queue.apply(&event)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            queue,
        ))
    }

    pub fn append(&mut self, event: &QueueEvent) -> Result<(), QueueError> {
        let mut line = serde_json::to_string(event).map_err(|e| QueueError::Log(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| QueueError::Log(format!("{}: {e}", self.path.display())))
    }
}
