//! Per-request context shared by every pipeline stage.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backend::ModelCallRecord;
use crate::canonical::{canonical_string, StructuredOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// Handle to an uploaded image. Payload bytes live with the upload store;
/// the pipeline only sees the id, media type and size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttachmentRef {
    pub id: String,
    #[serde(default = "default_media_type")]
    pub media_type: String,
    #[serde(default)]
    pub size_bytes: u64,
}

fn default_media_type() -> String {
    "image/jpeg".to_string()
}

impl AttachmentRef {
    pub fn image(id: impl Into<String>, size_bytes: u64) -> Self {
        AttachmentRef {
            id: id.into(),
            media_type: default_media_type(),
            size_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<AttachmentRef>,
    pub timestamp: DateTime<Utc>,
}

impl ChatTurn {
    pub fn user(text: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::User,
            text: text.into(),
            attachments: Vec::new(),
            timestamp: Utc::now(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Assistant,
            ..ChatTurn::user(text)
        }
    }

    pub fn with_attachments(mut self, attachments: Vec<AttachmentRef>) -> Self {
        self.attachments = attachments;
        self
    }

    /// Empty text is allowed only when an attachment carries the content.
    pub fn is_well_formed(&self) -> bool {
        !self.text.trim().is_empty() || !self.attachments.is_empty()
    }
}

/// Builds an alternating history from `(user, assistant)` exchanges.
pub fn history_from_exchanges<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Vec<ChatTurn> {
    let mut out = Vec::new();
    for (user, assistant) in pairs {
        out.push(ChatTurn::user(user));
        out.push(ChatTurn::assistant(assistant));
    }
    out
}

/// Roles must alternate starting with the user.
pub fn validate_history(history: &[ChatTurn]) -> Result<(), EnvelopeError> {
    for (i, turn) in history.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if turn.role != expected {
            return Err(EnvelopeError::HistoryOrder { index: i });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "ZH")]
    Zh,
    #[default]
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        SessionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Guardrails,
    Intent,
    Action,
    Confirmation,
}

impl Stage {
    pub const ORDER: [Stage; 4] = [Stage::Guardrails, Stage::Intent, Stage::Action, Stage::Confirmation];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Guardrails => "Guardrails",
            Stage::Intent => "Intent",
            Stage::Action => "Action",
            Stage::Confirmation => "Confirmation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub stage: Stage,
    /// Canonical serialization of the stage's structured output.
    pub verdict_digest: String,
    pub latency_ms: u64,
    pub backend_call: Option<ModelCallRecord>,
}

impl StageRecord {
    pub fn new<T: StructuredOutput>(
        stage: Stage,
        output: &T,
        latency_ms: u64,
        backend_call: Option<ModelCallRecord>,
    ) -> Self {
        StageRecord {
            stage,
            verdict_digest: canonical_string(output),
            latency_ms,
            backend_call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("stage {stage} cannot follow {previous:?}")]
    StageOrder { stage: Stage, previous: Option<Stage> },
    #[error("history role order broken at index {index}")]
    HistoryOrder { index: usize },
}

/// Default history cap, counted in user/assistant exchanges.
pub const DEFAULT_HISTORY_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineEnvelope {
    pub session_id: SessionId,
    pub turn: ChatTurn,
    pub history: Vec<ChatTurn>,
    #[serde(default)]
    pub language: Language,
    #[serde(default)]
    pub stage_trace: Vec<StageRecord>,
    pub final_reply: Option<String>,
}

impl PipelineEnvelope {
    /// History is trimmed oldest-first to `history_cap` exchanges.
    pub fn new(session_id: SessionId, turn: ChatTurn, history: Vec<ChatTurn>, history_cap: usize) -> Self {
        PipelineEnvelope {
            session_id,
            turn,
            history: cap_history(history, history_cap),
            language: Language::Auto,
            stage_trace: Vec::new(),
            final_reply: None,
        }
    }

    pub fn with_language(mut self, language: Language) -> Self {
        self.language = language;
        self
    }

    pub fn last_stage(&self) -> Option<Stage> {
        self.stage_trace.last().map(|r| r.stage)
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.stage_trace.iter().map(|r| r.stage).collect()
    }

    /// Appends a record, keeping the trace a prefix of [`Stage::ORDER`].
    pub fn push_record(&mut self, record: StageRecord) -> Result<(), EnvelopeError> {
        let next = Stage::ORDER.get(self.stage_trace.len()).copied();
        if next != Some(record.stage) {
            return Err(EnvelopeError::StageOrder {
                stage: record.stage,
                previous: self.last_stage(),
            });
        }
        self.stage_trace.push(record);
        Ok(())
    }
}

/// Keeps the newest `cap` exchanges; the result still starts with a user turn.
pub fn cap_history(mut history: Vec<ChatTurn>, cap: usize) -> Vec<ChatTurn> {
    let max_turns = cap * 2;
    if history.len() > max_turns {
        history.drain(..history.len() - max_turns);
    }
    while history.first().is_some_and(|t| t.role != Role::User) {
        history.remove(0);
    }
    history
}

/// True when `stages` is a prefix of the canonical stage order.
pub fn is_stage_prefix(stages: &[Stage]) -> bool {
    stages.len() <= Stage::ORDER.len() && stages.iter().zip(Stage::ORDER.iter()).all(|(a, b)| a == b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guardrails::GuardrailVerdict;

    fn env() -> PipelineEnvelope {
        PipelineEnvelope::new(SessionId::new("s"), ChatTurn::user("hi"), Vec::new(), DEFAULT_HISTORY_CAP)
    }

    #[test]
    fn rejects_out_of_order_records() {
        let mut e = env();
        let v = GuardrailVerdict::safe();
        let err = e.push_record(StageRecord::new(Stage::Intent, &v, 0, None)).unwrap_err();
        assert!(matches!(err, EnvelopeError::StageOrder { stage: Stage::Intent, previous: None }));
        e.push_record(StageRecord::new(Stage::Guardrails, &v, 0, None)).unwrap();
        assert!(e.push_record(StageRecord::new(Stage::Action, &v, 0, None)).is_err());
        assert!(e.push_record(StageRecord::new(Stage::Guardrails, &v, 0, None)).is_err());
        assert_eq!(e.stages(), vec![Stage::Guardrails]);
    }

    #[test]
    fn history_cap_drops_oldest_exchanges() {
        let pairs: Vec<(String, String)> = (0..13).map(|i| (format!("u{i}"), format!("a{i}"))).collect();
        let history = history_from_exchanges(pairs.iter().map(|(u, a)| (u.as_str(), a.as_str())));
        let capped = cap_history(history, 10);
        assert_eq!(capped.len(), 20);
        assert_eq!(capped[0].text, "u3");
        assert!(validate_history(&capped).is_ok());
    }

    #[test]
    fn cap_realigns_to_user_turn() {
        let mut history = history_from_exchanges([("u0", "a0"), ("u1", "a1")]);
        history.remove(0);
        let capped = cap_history(history, 10);
        assert_eq!(capped[0].text, "u1");
    }

    #[test]
    fn history_must_alternate() {
        let history = vec![ChatTurn::user("a"), ChatTurn::user("b")];
        assert_eq!(validate_history(&history), Err(EnvelopeError::HistoryOrder { index: 1 }));
        assert!(validate_history(&[ChatTurn::assistant("x")]).is_err());
    }

    #[test]
    fn empty_turn_without_attachment_is_malformed() {
        assert!(!ChatTurn::user("  ").is_well_formed());
        assert!(ChatTurn::user("").with_attachments(vec![AttachmentRef::image("r", 10)]).is_well_formed());
    }

    #[test]
    fn prefix_check() {
        assert!(is_stage_prefix(&[]));
        assert!(is_stage_prefix(&[Stage::Guardrails, Stage::Intent]));
        assert!(!is_stage_prefix(&[Stage::Intent]));
    }
}
