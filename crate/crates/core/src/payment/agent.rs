use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    completion_state, merge_drafts, resolve_multiple, select_retained, validate_draft, BankDirectory,
    CompletionState, Field, IdentifierRules, PaymentAgentResult, TransferDraft, AMOUNT_ERROR,
};
use crate::backend::{complete_structured, render_prompt, AdapterSpec, ModelBackend, ModelCallRecord, ModelError};
use crate::banking::{AccountId, Bank, BankError, DraftValidator, PendingTransaction, TransferKind};
use crate::envelope::{ChatTurn, SessionId};

pub const AGENT_FAILURE_MESSAGE: &str =
    "Sorry, I'm having trouble processing your transfer right now. Please try again in a moment.";

/// Marker placed between the typed message and any OCR transcription.
pub const IMAGE_TEXT_MARKER: &str = "[Image text]";

pub struct PaymentContext<'a> {
    pub backend: &'a dyn ModelBackend,
    pub spec: &'a AdapterSpec,
    pub directory: &'a BankDirectory,
    pub rules: &'a IdentifierRules,
    pub retry_limit: u32,
}

/// Draft state kept by the session between turns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaymentSessionState {
    pub draft: Option<TransferDraft>,
    /// Drafts awaiting "which one first"; kept for one follow-up turn.
    pub retained: Vec<TransferDraft>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaymentTurn {
    pub result: PaymentAgentResult,
    pub completion: CompletionState,
    pub call: Option<ModelCallRecord>,
    pub failure: Option<ModelError>,
}

impl PaymentTurn {
    pub fn ready_draft(&self) -> Option<&TransferDraft> {
        match (&self.completion, self.result.transfers.as_slice()) {
            (CompletionState::ReadyForConfirmation, [one]) => Some(one),
            _ => None,
        }
    }
}

pub fn confirmation_message(draft: &TransferDraft) -> String {
    format!(
        "Please confirm: transfer {} to {} at {} (account {}) with reference \"{}\". Approve to proceed, or edit or decline.",
        draft.amount.map(|a| a.to_string()).unwrap_or_default(),
        draft.recipient_name.as_deref().unwrap_or_default(),
        draft.bank_name.as_deref().unwrap_or_default(),
        draft.account_number.as_deref().unwrap_or_default(),
        draft.reference
    )
}

fn invalid_message(draft: &TransferDraft, errors: &BTreeMap<Field, String>) -> String {
    let mut parts = Vec::new();
    if errors.contains_key(&Field::BankName) {
        parts.push(format!(
            "Sorry, {} is not a supported bank. Could you provide a valid bank name?",
            draft.bank_name.as_deref().unwrap_or("that")
        ));
    }
    if errors.get(&Field::Amount).map(String::as_str) == Some(AMOUNT_ERROR) {
        parts.push("Please enter a valid amount greater than zero.".to_string());
    }
    if errors.contains_key(&Field::AccountNumber) {
        parts.push("That account number doesn't look right. Could you check it and send it again?".to_string());
    }
    if parts.is_empty() {
        parts.push("Some of the transfer details look incorrect. Could you check them again?".to_string());
    }
    parts.join(" ")
}

fn missing_message(draft: &TransferDraft, missing: &[Field]) -> String {
    if missing == [Field::Amount] {
        return "Got it. How much would you like to transfer?".to_string();
    }
    if let Some(name) = &draft.recipient_name {
        if missing.contains(&Field::BankName) && missing.contains(&Field::AccountNumber) {
            return format!("Could you provide the bank account details of {name}?");
        }
    }
    let names: Vec<&str> = missing.iter().map(|f| f.describe()).collect();
    format!("Could you provide the {}?", names.join(" and "))
}

/// Message for a draft the agent settled on itself.
fn message_for(draft: &TransferDraft, completion: &CompletionState) -> String {
    match completion {
        CompletionState::ReadyForConfirmation => confirmation_message(draft),
        CompletionState::Invalid { errors } => invalid_message(draft, errors),
        CompletionState::Incomplete { missing } => missing_message(draft, missing),
        CompletionState::AwaitingDisambiguation { .. } => super::MULTIPLE_TRANSFERS_MESSAGE.to_string(),
    }
}

fn canonical_bank(mut draft: TransferDraft, directory: &BankDirectory) -> TransferDraft {
    if let Some(entry) = draft.bank_name.as_deref().and_then(|b| directory.resolve(b)) {
        draft.bank_name = Some(entry.bank_name.clone());
    }
    draft
}

/// Settles one draft into session state and builds the user reply.
fn settle(
    ctx: &PaymentContext<'_>,
    state: &mut PaymentSessionState,
    draft: TransferDraft,
    model_message: Option<String>,
) -> (PaymentAgentResult, CompletionState) {
    let draft = canonical_bank(draft, ctx.directory);
    let completion = validate_draft(&draft, ctx.directory, ctx.rules);
    let message = match (&completion, model_message) {
        (CompletionState::Incomplete { .. }, Some(m)) if !m.trim().is_empty() => m,
        _ => message_for(&draft, &completion),
    };
    // invalid values are dropped so the next answer can fill them
    let mut stored = draft.clone();
    if let CompletionState::Invalid { errors } = &completion {
        for f in errors.keys() {
            stored.clear(*f);
        }
    }
    state.draft = Some(stored.clone());
    (
        PaymentAgentResult {
            transfers: vec![stored],
            message,
        },
        completion,
    )
}

/// Runs one payment turn: extraction, merge with the session draft,
/// validation and the clarification or confirmation reply.
pub fn handle_payment_turn(
    ctx: &PaymentContext<'_>,
    state: &mut PaymentSessionState,
    turn: &ChatTurn,
    history: &[ChatTurn],
    ocr_text: Option<&str>,
) -> PaymentTurn {
    if !state.retained.is_empty() {
        let retained = std::mem::take(&mut state.retained);
        if let Some(i) = select_retained(&retained, &turn.text) {
            let (result, completion) = settle(ctx, state, retained[i].clone(), None);
            return PaymentTurn {
                result,
                completion,
                call: None,
                failure: None,
            };
        }
    }

    let message = match ocr_text {
        Some(ocr) => format!("{}\n\n{IMAGE_TEXT_MARKER}\n{ocr}", turn.text),
        None => turn.text.clone(),
    };
    let bindings = BTreeMap::from([("bank_list".to_string(), ctx.directory.prompt_listing())]);
    let extracted = render_prompt(ctx.spec, &bindings)
        .map_err(|e| ModelError::BackendUnavailable(e.to_string()))
        .and_then(|prompt| {
            complete_structured::<PaymentAgentResult>(ctx.backend, ctx.spec, &prompt, history, &message, ctx.retry_limit)
        });
    let (raw, call) = match extracted {
        Ok(v) => v,
        Err(e) => {
            return PaymentTurn {
                result: PaymentAgentResult {
                    transfers: Vec::new(),
                    message: AGENT_FAILURE_MESSAGE.to_string(),
                },
                completion: CompletionState::Incomplete {
                    missing: TransferDraft::default().missing_fields(),
                },
                call: None,
                failure: Some(e),
            }
        }
    };

    match raw.transfers.len() {
        0 => {
            let completion = completion_state(&raw, ctx.directory, ctx.rules);
            PaymentTurn {
                result: raw,
                completion,
                call: Some(call),
                failure: None,
            }
        }
        1 => {
            let merged = merge_drafts(state.draft.as_ref(), &raw.transfers[0]);
            let (result, completion) = settle(ctx, state, merged, Some(raw.message));
            PaymentTurn {
                result,
                completion,
                call: Some(call),
                failure: None,
            }
        }
        n => {
            let result = resolve_multiple(PaymentAgentResult {
                transfers: raw.transfers.into_iter().map(|d| canonical_bank(d, ctx.directory)).collect(),
                message: raw.message,
            });
            state.retained = result.transfers.clone();
            state.draft = None;
            PaymentTurn {
                result,
                completion: CompletionState::AwaitingDisambiguation { count: n },
                call: Some(call),
                failure: None,
            }
        }
    }
}

/// Re-validation used by the bank when a pending transfer is edited.
pub struct PaymentValidator<'a> {
    pub directory: &'a BankDirectory,
    pub rules: &'a IdentifierRules,
}

impl DraftValidator for PaymentValidator<'_> {
    fn revalidate(&self, draft: &TransferDraft) -> Result<TransferKind, String> {
        match validate_draft(draft, self.directory, self.rules) {
            CompletionState::ReadyForConfirmation => {
                Ok(self.rules.transfer_kind(draft.account_number.as_deref().unwrap_or_default()))
            }
            CompletionState::Invalid { errors } => Err(errors
                .iter()
                .map(|(f, e)| format!("{f}: {e}"))
                .collect::<Vec<_>>()
                .join("; ")),
            CompletionState::Incomplete { missing } => Err(format!(
                "missing {}",
                missing.iter().map(|f| f.describe()).collect::<Vec<_>>().join(", ")
            )),
            CompletionState::AwaitingDisambiguation { .. } => Err("more than one transfer".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubmitError {
    #[error("draft is not ready for confirmation")]
    NotReady(CompletionState),
    #[error(transparent)]
    Bank(#[from] BankError),
}

impl SubmitError {
    pub fn user_message(&self) -> String {
        match self {
            SubmitError::NotReady(_) => "Some transfer details are still missing.".to_string(),
            SubmitError::Bank(BankError::Precheck(p)) => p.user_message().to_string(),
            SubmitError::Bank(_) => "Sorry, this transfer can't be processed right now.".to_string(),
        }
    }
}

/// Runs bank pre-checks and parks a ready draft awaiting the user's decision.
pub fn submit_for_execution(
    draft: &TransferDraft,
    session_id: &SessionId,
    account_id: &AccountId,
    bank: &Bank,
    directory: &BankDirectory,
    rules: &IdentifierRules,
) -> Result<PendingTransaction, SubmitError> {
    let completion = validate_draft(draft, directory, rules);
    if !completion.is_ready() {
        return Err(SubmitError::NotReady(completion));
    }
    let kind = rules.transfer_kind(draft.account_number.as_deref().unwrap_or_default());
    Ok(bank.create_pending(session_id, account_id, draft.clone(), kind)?)
}
