//! Append-only audit stream. Events carry digests and category labels only;
//! message text never leaves the in-memory session.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use chatbank_core::envelope::{SessionId, Stage};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How many events stay readable in memory.
const RECENT_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    SessionOpened,
    SessionClosed,
    SessionExpired,
    StageCompleted,
    StageFailed,
    TransactionExpired,
    SecondFactorIssued,
    BlocklistReloaded,
    KnowledgeIngested,
    AdminAuthFailed,
    AdminParseFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEvent {
    pub seq: u64,
    pub session_id: Option<SessionId>,
    pub stage: Option<Stage>,
    pub event_kind: AuditKind,
    /// Category label such as a violation class, intent or tx state.
    pub label: Option<String>,
    /// `sha256:` of the stage's canonical output.
    pub verdict_digest: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub redaction_applied: bool,
}

/// Event fields before a sequence number is assigned.
#[derive(Debug, Clone)]
pub struct AuditEntry {
    pub session_id: Option<SessionId>,
    pub stage: Option<Stage>,
    pub kind: AuditKind,
    pub label: Option<String>,
    pub digest_of: Option<String>,
}

impl AuditEntry {
    pub fn new(kind: AuditKind) -> Self {
        AuditEntry {
            session_id: None,
            stage: None,
            kind,
            label: None,
            digest_of: None,
        }
    }

    pub fn session(mut self, id: &SessionId) -> Self {
        self.session_id = Some(id.clone());
        self
    }

    pub fn stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Content is hashed before it is stored.
    pub fn digest_of(mut self, content: impl Into<String>) -> Self {
        self.digest_of = Some(content.into());
        self
    }
}

pub fn digest(content: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(content.as_bytes())))
}

struct Inner {
    next_seq: u64,
    sink: Option<BufWriter<File>>,
    recent: VecDeque<AuditEvent>,
}

/// Single serialized appender. Sequence numbers are gap-free per process.
pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    /// Keeps events in memory only.
    pub fn in_memory() -> Self {
        AuditLog {
            inner: Mutex::new(Inner {
                next_seq: 1,
                sink: None,
                recent: VecDeque::new(),
            }),
        }
    }

    /// Appends JSON Lines to `path`, creating it if needed.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = AuditLog::in_memory();
        log.inner.lock().unwrap().sink = Some(BufWriter::new(file));
        Ok(log)
    }

    pub fn append(&self, entry: AuditEntry, at: DateTime<Utc>) -> AuditEvent {
        let mut inner = self.inner.lock().unwrap();
        let event = AuditEvent {
            seq: inner.next_seq,
            session_id: entry.session_id,
            stage: entry.stage,
            event_kind: entry.kind,
            label: entry.label,
            verdict_digest: entry.digest_of.as_deref().map(digest),
            timestamp: at,
            redaction_applied: entry.digest_of.is_some(),
        };
        inner.next_seq += 1;
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("audit event serializes");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::error!(seq = event.seq, "audit write failed: {e}");
            }
        }
        if inner.recent.len() == RECENT_CAP {
            inner.recent.pop_front();
        }
        inner.recent.push_back(event.clone());
        event
    }

    /// Most recent events, oldest first.
    pub fn recent(&self) -> Vec<AuditEvent> {
        self.inner.lock().unwrap().recent.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_is_gap_free_and_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&path).unwrap();
        for _ in 0..5 {
            log.append(AuditEntry::new(AuditKind::SessionOpened), Utc::now());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let seqs: Vec<u64> = text
            .lines()
            .map(|l| serde_json::from_str::<AuditEvent>(l).unwrap().seq)
            .collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn digest_replaces_content() {
        let log = AuditLog::in_memory();
        let e = log.append(
            AuditEntry::new(AuditKind::StageCompleted).digest_of("Transfer RM1000 to John"),
            Utc::now(),
        );
        assert!(e.redaction_applied);
        assert!(!serde_json::to_string(&e).unwrap().contains("John"));
        assert_eq!(e.verdict_digest.unwrap().len(), "sha256:".len() + 64);
    }
}
