//! Request and response bodies.

use chatbank_core::banking::{PendingTransaction, TransferKind, TxState};
use chatbank_core::envelope::{AttachmentRef, ChatTurn, Role, SessionId, Stage};
use chatbank_core::money::Money;
use chatbank_core::payment::{CompletionState, Field, TransferDraft};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpenSessionRequest {
    pub account_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpenSessionResponse {
    pub session_id: SessionId,
    pub account_id: String,
    pub created_at: DateTime<Utc>,
    pub idle_timeout_secs: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PostMessageRequest {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<AttachmentRef>,
}

/// Transaction summary the user approves, declines or edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionPreview {
    pub tx_id: String,
    pub recipient_name: Option<String>,
    pub bank_name: Option<String>,
    pub account_number: Option<String>,
    pub amount: Option<Money>,
    pub reference: String,
    pub kind: TransferKind,
    #[serde(rename = "requires2FA")]
    pub requires_2fa: bool,
    pub actions: Vec<String>,
}

impl From<&PendingTransaction> for TransactionPreview {
    fn from(tx: &PendingTransaction) -> Self {
        TransactionPreview {
            tx_id: tx.tx_id.0.clone(),
            recipient_name: tx.draft.recipient_name.clone(),
            bank_name: tx.draft.bank_name.clone(),
            account_number: tx.draft.account_number.clone(),
            amount: tx.draft.amount,
            reference: tx.draft.reference.clone(),
            kind: tx.kind,
            requires_2fa: tx.requires_2fa,
            actions: ["approve", "decline", "edit"].map(String::from).to_vec(),
        }
    }
}

/// Simulated out-of-band delivery of the one-time code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SecondFactorChallenge {
    pub channel: String,
    pub code: String,
}

impl SecondFactorChallenge {
    pub fn simulated(code: String) -> Self {
        SecondFactorChallenge {
            channel: "simulated".into(),
            code,
        }
    }
}

/// What the assistant is waiting for from the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Clarification {
    #[serde(rename_all = "camelCase")]
    MissingFields { fields: Vec<Field> },
    #[serde(rename_all = "camelCase")]
    InvalidFields { fields: Vec<Field> },
    #[serde(rename_all = "camelCase")]
    ChooseTransfer { count: usize },
    Intent,
}

impl Clarification {
    pub fn from_completion(state: &CompletionState) -> Option<Self> {
        match state {
            CompletionState::Incomplete { missing } => Some(Clarification::MissingFields {
                fields: missing.clone(),
            }),
            CompletionState::Invalid { errors } => Some(Clarification::InvalidFields {
                fields: errors.keys().copied().collect(),
            }),
            CompletionState::AwaitingDisambiguation { count } => Some(Clarification::ChooseTransfer { count: *count }),
            CompletionState::ReadyForConfirmation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MessageReply {
    pub session_id: SessionId,
    pub final_reply: String,
    pub stages: Vec<Stage>,
    pub is_safe: Option<bool>,
    pub violation: Option<String>,
    pub intent: Option<String>,
    pub preview: Option<TransactionPreview>,
    pub clarification: Option<Clarification>,
    pub second_factor: Option<SecondFactorChallenge>,
    /// Stage that failed, if any. The cause is logged, not returned.
    pub failed_stage: Option<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKindWire {
    Approve,
    Decline,
    Edit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRequest {
    pub decision: DecisionKindWire,
    #[serde(default)]
    pub second_factor: Option<String>,
    /// Replacement fields for an edit.
    #[serde(default)]
    pub draft: Option<TransferDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionReply {
    pub tx_id: String,
    pub decision: DecisionKindWire,
    pub state: TxState,
    pub message: String,
    pub available_balance: Option<Money>,
    /// Present while the transaction still awaits a decision (after an edit).
    pub preview: Option<TransactionPreview>,
    pub second_factor: Option<SecondFactorChallenge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MessageView {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

impl From<&ChatTurn> for MessageView {
    fn from(t: &ChatTurn) -> Self {
        MessageView {
            role: t.role,
            text: t.text.clone(),
            timestamp: t.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub session_id: SessionId,
    pub account_id: String,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
    pub messages: Vec<MessageView>,
    pub preview: Option<TransactionPreview>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CloseReply {
    pub session_id: SessionId,
    pub closed: bool,
    pub expired_transactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReloadReply {
    pub version: u64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReply {
    pub version: u64,
    pub documents: usize,
}
