//! Pre-execution rules: 2FA threshold, balance, limits and AML screening.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Account, AccountStatus, TransferKind};
use crate::money::Money;
use crate::payment::TransferDraft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P2pRule {
    /// 2FA when the amount, or today's outflow plus the amount, exceeds the threshold.
    PerTransactionOrCumulativeDaily,
    PerTransaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P2mRule {
    PerTransaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct TwoFaPolicy {
    pub threshold: Money,
    pub p2p_rule: P2pRule,
    pub p2m_rule: P2mRule,
}

impl Default for TwoFaPolicy {
    fn default() -> Self {
        TwoFaPolicy {
            threshold: Money::from_sen(25_000),
            p2p_rule: P2pRule::PerTransactionOrCumulativeDaily,
            p2m_rule: P2mRule::PerTransaction,
        }
    }
}

/// Strictly greater than the threshold triggers 2FA; exactly RM250 does not.
pub fn requires_2fa(amount: Money, kind: TransferKind, daily_outflow: Money, policy: &TwoFaPolicy) -> bool {
    let over = |m: Money| m > policy.threshold;
    match kind {
        TransferKind::P2P => match policy.p2p_rule {
            P2pRule::PerTransactionOrCumulativeDaily => over(amount) || over(daily_outflow + amount),
            P2pRule::PerTransaction => over(amount),
        },
        TransferKind::P2M => match policy.p2m_rule {
            P2mRule::PerTransaction => over(amount),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct Limits {
    pub per_transaction: Money,
    pub daily: Money,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            per_transaction: Money::from_ringgit(10_000),
            daily: Money::from_ringgit(50_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LimitKind {
    PerTransaction,
    Daily,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
pub enum PrecheckFailure {
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("transaction limit exceeded")]
    LimitExceeded(LimitKind),
    #[error("counterparty flagged by AML screening")]
    AmlFlagged,
    #[error("account is frozen")]
    AccountFrozen,
    #[error("draft is incomplete")]
    IncompleteDraft,
}

impl PrecheckFailure {
    pub fn code(&self) -> &'static str {
        match self {
            PrecheckFailure::InsufficientFunds => "InsufficientFunds",
            PrecheckFailure::LimitExceeded(_) => "LimitExceeded",
            PrecheckFailure::AmlFlagged => "AmlFlagged",
            PrecheckFailure::AccountFrozen => "AccountFrozen",
            PrecheckFailure::IncompleteDraft => "IncompleteDraft",
        }
    }

    pub fn user_message(&self) -> &'static str {
        match self {
            PrecheckFailure::InsufficientFunds => {
                "Sorry, your available balance isn't enough for this transfer. Would you like to try a smaller amount?"
            }
            PrecheckFailure::LimitExceeded(LimitKind::PerTransaction) => {
                "This amount is above your per-transaction limit. Please try a smaller amount."
            }
            PrecheckFailure::LimitExceeded(LimitKind::Daily) => {
                "This transfer would exceed your daily transfer limit. Please try again tomorrow or use a smaller amount."
            }
            PrecheckFailure::AmlFlagged => {
                "We're unable to process a transfer to this recipient. Please contact Help & Support Center for assistance."
            }
            PrecheckFailure::AccountFrozen => {
                "Your account is currently unable to make transfers. Please contact Help & Support Center."
            }
            PrecheckFailure::IncompleteDraft => "Some transfer details are still missing.",
        }
    }
}

/// Counterparty identifiers on the watch list, compared after stripping
/// spaces and dashes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmlList {
    #[serde(default)]
    identifiers: HashSet<String>,
}

impl AmlList {
    pub fn new(identifiers: impl IntoIterator<Item = String>) -> Self {
        AmlList {
            identifiers: identifiers.into_iter().map(|i| normalize_identifier(&i)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: AmlList = serde_json::from_str(text)?;
        Ok(AmlList::new(raw.identifiers))
    }

    pub fn contains(&self, identifier: &str) -> bool {
        self.identifiers.contains(&normalize_identifier(identifier))
    }
}

pub fn normalize_identifier(id: &str) -> String {
    id.chars().filter(|c| !c.is_whitespace() && *c != '-').collect::<String>().to_uppercase()
}

/// Balance, limits and AML checks for a complete draft.
pub fn precheck(
    draft: &TransferDraft,
    account: &Account,
    daily_outflow: Money,
    aml: &AmlList,
    limits: &Limits,
) -> Result<(), PrecheckFailure> {
    let (Some(amount), Some(identifier)) = (draft.amount, draft.account_number.as_deref()) else {
        return Err(PrecheckFailure::IncompleteDraft);
    };
    if account.status == AccountStatus::Frozen {
        return Err(PrecheckFailure::AccountFrozen);
    }
    if aml.contains(identifier) {
        return Err(PrecheckFailure::AmlFlagged);
    }
    if amount > limits.per_transaction {
        return Err(PrecheckFailure::LimitExceeded(LimitKind::PerTransaction));
    }
    if daily_outflow + amount > limits.daily {
        return Err(PrecheckFailure::LimitExceeded(LimitKind::Daily));
    }
    if amount > account.balance {
        return Err(PrecheckFailure::InsufficientFunds);
    }
    Ok(())
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferKind::P2P => "P2P",
            TransferKind::P2M => "P2M",
        })
    }
}
