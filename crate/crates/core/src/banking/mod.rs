//! Desk-scale bank: accounts, ledger, pending transactions and the
//! approve/decline/edit state machine.
//!
//! Executed transfers debit the sender and credit an external sink, so
//! `sum(balances) + sink` is invariant.

mod policy;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::envelope::SessionId;
use crate::money::Money;
use crate::payment::TransferDraft;

pub use policy::{
    normalize_identifier, precheck, requires_2fa, AmlList, LimitKind, Limits, P2mRule, P2pRule, PrecheckFailure,
    TwoFaPolicy,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Self {
        AccountId(id.into())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub String);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountStatus {
    Active,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Account {
    pub account_id: AccountId,
    pub holder_name: String,
    pub balance: Money,
    #[serde(default)]
    pub daily_outflow: Money,
    #[serde(default)]
    pub outflow_day: Option<NaiveDate>,
    pub status: AccountStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferKind {
    P2P,
    P2M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeclineReason {
    User,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "state", content = "detail")]
pub enum TxState {
    AwaitingDecision,
    Approved,
    Declined(DeclineReason),
    Edited,
    Executed,
    Failed(String),
}

impl TxState {
    pub fn name(&self) -> &'static str {
        match self {
            TxState::AwaitingDecision => "AwaitingDecision",
            TxState::Approved => "Approved",
            TxState::Declined(_) => "Declined",
            TxState::Edited => "Edited",
            TxState::Executed => "Executed",
            TxState::Failed(_) => "Failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, TxState::Declined(_) | TxState::Executed | TxState::Failed(_))
    }

    /// The declared edge set.
    pub fn can_transition_to(&self, next: &TxState) -> bool {
        use TxState::*;
        matches!(
            (self, next),
            (AwaitingDecision, Approved)
                | (AwaitingDecision, Declined(_))
                | (AwaitingDecision, Edited)
                | (Approved, Executed)
                | (Approved, Failed(_))
                | (Edited, AwaitingDecision)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingTransaction {
    pub tx_id: TxId,
    pub session_id: SessionId,
    pub account_id: AccountId,
    pub draft: TransferDraft,
    pub kind: TransferKind,
    pub requires_2fa: bool,
    pub state: TxState,
    /// Every state the transaction has been in, oldest first.
    pub trail: Vec<TxState>,
    pub created_at: DateTime<Utc>,
}

impl PendingTransaction {
    fn transition(&mut self, next: TxState) -> Result<(), BankError> {
        if !self.state.can_transition_to(&next) {
            return Err(BankError::InvalidState {
                state: self.state.name(),
                attempted: next.name(),
            });
        }
        self.state = next.clone();
        self.trail.push(next);
        Ok(())
    }

    pub fn amount(&self) -> Money {
        self.draft.amount.unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionRecord {
    pub tx_id: TxId,
    pub account_id: AccountId,
    pub amount: Money,
    pub kind: TransferKind,
    pub counterparty_name: String,
    pub counterparty_bank: String,
    pub counterparty_account: String,
    pub reference: String,
    pub executed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DecisionKind {
    Approve,
    Decline,
    Edit,
    Expire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRecord {
    pub tx_id: TxId,
    pub decision: DecisionKind,
    /// Whether the decision was accepted (errors are recorded too).
    pub accepted: bool,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Approve,
    Decline,
    Edit(TransferDraft),
}

impl Decision {
    pub fn kind(&self) -> DecisionKind {
        match self {
            Decision::Approve => DecisionKind::Approve,
            Decision::Decline => DecisionKind::Decline,
            Decision::Edit(_) => DecisionKind::Edit,
        }
    }
}

/// Re-validates an edited draft. Implemented by the payment agent.
pub trait DraftValidator {
    fn revalidate(&self, draft: &TransferDraft) -> Result<TransferKind, String>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BankError {
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("unknown transaction `{0}`")]
    UnknownTransaction(String),
    #[error("second factor required")]
    TwoFaRequired,
    #[error("transaction is {state}; cannot move to {attempted}")]
    InvalidState {
        state: &'static str,
        attempted: &'static str,
    },
    #[error("edited transfer is not valid: {0}")]
    StaleEdit(String),
    #[error(transparent)]
    Precheck(#[from] PrecheckFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccountSummary {
    pub account_id: AccountId,
    pub holder_name: String,
    pub available_balance: Money,
    pub status: AccountStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpendCategory {
    pub name: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InsightSummary {
    pub period_days: u32,
    pub total_spend: Money,
    pub categories: Vec<SpendCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeedAccount {
    pub account_id: String,
    pub holder_name: String,
    pub balance: Money,
    #[serde(default = "active")]
    pub status: AccountStatus,
}

fn active() -> AccountStatus {
    AccountStatus::Active
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFile {
    pub accounts: Vec<SeedAccount>,
}

impl SeedFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn builtin() -> Self {
        SeedFile::from_json(crate::defaults::ACCOUNTS_JSON).expect("built-in seed parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct BankConfig {
    pub two_fa: TwoFaPolicy,
    pub limits: Limits,
    /// Offset from UTC, in hours, of the daily outflow reset.
    pub day_boundary_utc_offset_hours: i32,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            two_fa: TwoFaPolicy::default(),
            limits: Limits::default(),
            day_boundary_utc_offset_hours: 8,
        }
    }
}

#[derive(Debug, Default)]
struct BankState {
    accounts: BTreeMap<AccountId, Account>,
    pending: BTreeMap<TxId, PendingTransaction>,
    records: Vec<TransactionRecord>,
    decisions: Vec<DecisionRecord>,
    otps: HashMap<TxId, String>,
    external_sink: Money,
    next_tx: u64,
}

pub struct Bank {
    state: Mutex<BankState>,
    config: BankConfig,
    aml: AmlList,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Bank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bank").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Bank {
    pub fn new(seed: SeedFile, config: BankConfig, aml: AmlList) -> Self {
        Bank::with_clock(seed, config, aml, Arc::new(SystemClock))
    }

    pub fn with_clock(seed: SeedFile, config: BankConfig, aml: AmlList, clock: Arc<dyn Clock>) -> Self {
        let accounts = seed
            .accounts
            .into_iter()
            .map(|a| {
                let id = AccountId::new(a.account_id);
                let account = Account {
                    account_id: id.clone(),
                    holder_name: a.holder_name,
                    balance: a.balance,
                    daily_outflow: Money::ZERO,
                    outflow_day: None,
                    status: a.status,
                };
                (id, account)
            })
            .collect();
        Bank {
            state: Mutex::new(BankState {
                accounts,
                ..Default::default()
            }),
            config,
            aml,
            clock,
        }
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn today(&self) -> NaiveDate {
        let offset = FixedOffset::east_opt(self.config.day_boundary_utc_offset_hours * 3600)
            .unwrap_or_else(|| FixedOffset::east_opt(0).unwrap());
        self.clock.now().with_timezone(&offset).date_naive()
    }

    fn outflow_today(account: &Account, today: NaiveDate) -> Money {
        if account.outflow_day == Some(today) {
            account.daily_outflow
        } else {
            Money::ZERO
        }
    }

    pub fn has_account(&self, id: &AccountId) -> bool {
        self.state.lock().unwrap().accounts.contains_key(id)
    }

    pub fn requires_2fa_for(&self, account_id: &AccountId, amount: Money, kind: TransferKind) -> Result<bool, BankError> {
        let state = self.state.lock().unwrap();
        let account = state
            .accounts
            .get(account_id)
            .ok_or_else(|| BankError::UnknownAccount(account_id.0.clone()))?;
        let outflow = Self::outflow_today(account, self.today());
        Ok(requires_2fa(amount, kind, outflow, &self.config.two_fa))
    }

    pub fn precheck(&self, account_id: &AccountId, draft: &TransferDraft) -> Result<(), BankError> {
        let state = self.state.lock().unwrap();
        let account = state
            .accounts
            .get(account_id)
            .ok_or_else(|| BankError::UnknownAccount(account_id.0.clone()))?;
        let outflow = Self::outflow_today(account, self.today());
        precheck(draft, account, outflow, &self.aml, &self.config.limits)?;
        Ok(())
    }

    /// Runs pre-checks and parks the transfer awaiting a human decision.
    pub fn create_pending(
        &self,
        session_id: &SessionId,
        account_id: &AccountId,
        draft: TransferDraft,
        kind: TransferKind,
    ) -> Result<PendingTransaction, BankError> {
        let today = self.today();
        let mut state = self.state.lock().unwrap();
        let account = state
            .accounts
            .get(account_id)
            .ok_or_else(|| BankError::UnknownAccount(account_id.0.clone()))?;
        let outflow = Self::outflow_today(account, today);
        precheck(&draft, account, outflow, &self.aml, &self.config.limits)?;
        let amount = draft.amount.unwrap_or_default();
        state.next_tx += 1;
        let tx = PendingTransaction {
            tx_id: TxId(format!("tx-{:06}", state.next_tx)),
            session_id: session_id.clone(),
            account_id: account_id.clone(),
            requires_2fa: requires_2fa(amount, kind, outflow, &self.config.two_fa),
            draft,
            kind,
            state: TxState::AwaitingDecision,
            trail: vec![TxState::AwaitingDecision],
            created_at: self.clock.now(),
        };
        state.pending.insert(tx.tx_id.clone(), tx.clone());
        Ok(tx)
    }

    /// Issues a fresh one-time code for a pending transaction.
    pub fn issue_second_factor(&self, tx_id: &TxId) -> Result<String, BankError> {
        let mut state = self.state.lock().unwrap();
        if !state.pending.contains_key(tx_id) {
            return Err(BankError::UnknownTransaction(tx_id.0.clone()));
        }
        let code = format!("{:06}", rand::thread_rng().gen_range(0..1_000_000));
        state.otps.insert(tx_id.clone(), code.clone());
        Ok(code)
    }

    pub fn transaction(&self, tx_id: &TxId) -> Option<PendingTransaction> {
        self.state.lock().unwrap().pending.get(tx_id).cloned()
    }

    /// Applies a user decision. Every call is logged, accepted or not.
    pub fn decide(
        &self,
        tx_id: &TxId,
        decision: Decision,
        second_factor: Option<&str>,
        validator: &dyn DraftValidator,
    ) -> Result<PendingTransaction, BankError> {
        let today = self.today();
        let now = self.clock.now();
        let mut guard = self.state.lock().unwrap();
        let state = &mut *guard;
        let kind = decision.kind();
        let result = Self::apply_decision(state, &self.config, &self.aml, tx_id, decision, second_factor, validator, today, now);
        state.decisions.push(DecisionRecord {
            tx_id: tx_id.clone(),
            decision: kind,
            accepted: result.is_ok(),
            at: now,
        });
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_decision(
        state: &mut BankState,
        config: &BankConfig,
        aml: &AmlList,
        tx_id: &TxId,
        decision: Decision,
        second_factor: Option<&str>,
        validator: &dyn DraftValidator,
        today: NaiveDate,
        now: DateTime<Utc>,
    ) -> Result<PendingTransaction, BankError> {
        let tx = state
            .pending
            .get(tx_id)
            .cloned()
            .ok_or_else(|| BankError::UnknownTransaction(tx_id.0.clone()))?;
        if tx.state != TxState::AwaitingDecision {
            return Err(BankError::InvalidState {
                state: tx.state.name(),
                attempted: match decision {
                    Decision::Approve => "Approved",
                    Decision::Decline => "Declined",
                    Decision::Edit(_) => "Edited",
                },
            });
        }
        let account = state
            .accounts
            .get(&tx.account_id)
            .cloned()
            .ok_or_else(|| BankError::UnknownAccount(tx.account_id.0.clone()))?;
        let outflow = Self::outflow_today(&account, today);
        let mut tx = tx;

        match decision {
            Decision::Approve => {
                let needs = tx.requires_2fa || requires_2fa(tx.amount(), tx.kind, outflow, &config.two_fa);
                if needs {
                    let issued = state.otps.get(tx_id);
                    let ok = matches!((issued, second_factor), (Some(code), Some(given)) if code == given.trim());
                    if !ok {
                        return Err(BankError::TwoFaRequired);
                    }
                    state.otps.remove(tx_id);
                }
                tx.transition(TxState::Approved)?;
                match precheck(&tx.draft, &account, outflow, aml, &config.limits) {
                    Err(reason) => {
                        tx.transition(TxState::Failed(reason.code().to_string()))?;
                    }
                    Ok(()) => {
                        let amount = tx.amount();
                        let acct = state.accounts.get_mut(&tx.account_id).expect("account checked above");
                        acct.balance = acct.balance - amount;
                        acct.daily_outflow = outflow + amount;
                        acct.outflow_day = Some(today);
                        state.external_sink = state.external_sink + amount;
                        state.records.push(TransactionRecord {
                            tx_id: tx.tx_id.clone(),
                            account_id: tx.account_id.clone(),
                            amount,
                            kind: tx.kind,
                            counterparty_name: tx.draft.recipient_name.clone().unwrap_or_default(),
                            counterparty_bank: tx.draft.bank_name.clone().unwrap_or_default(),
                            counterparty_account: tx.draft.account_number.clone().unwrap_or_default(),
                            reference: tx.draft.reference.clone(),
                            executed_at: now,
                        });
                        tx.transition(TxState::Executed)?;
                    }
                }
            }
            Decision::Decline => {
                tx.transition(TxState::Declined(DeclineReason::User))?;
                state.otps.remove(tx_id);
            }
            Decision::Edit(new_draft) => {
                let kind = validator.revalidate(&new_draft).map_err(BankError::StaleEdit)?;
                precheck(&new_draft, &account, outflow, aml, &config.limits)
                    .map_err(|e| BankError::StaleEdit(e.to_string()))?;
                tx.transition(TxState::Edited)?;
                tx.requires_2fa = requires_2fa(new_draft.amount.unwrap_or_default(), kind, outflow, &config.two_fa);
                tx.draft = new_draft;
                tx.kind = kind;
                tx.transition(TxState::AwaitingDecision)?;
                state.otps.remove(tx_id);
            }
        }
        state.pending.insert(tx_id.clone(), tx.clone());
        Ok(tx)
    }

    /// Declines an undecided transaction because its session ended.
    pub fn expire(&self, tx_id: &TxId) -> Result<PendingTransaction, BankError> {
        let now = self.clock.now();
        let mut state = self.state.lock().unwrap();
        let mut tx = state
            .pending
            .get(tx_id)
            .cloned()
            .ok_or_else(|| BankError::UnknownTransaction(tx_id.0.clone()))?;
        tx.transition(TxState::Declined(DeclineReason::Expired))?;
        state.otps.remove(tx_id);
        state.pending.insert(tx_id.clone(), tx.clone());
        state.decisions.push(DecisionRecord {
            tx_id: tx_id.clone(),
            decision: DecisionKind::Expire,
            accepted: true,
            at: now,
        });
        Ok(tx)
    }

    /// Expires undecided transactions of a session and forgets all of its
    /// pending entries. Executed transfers survive only as ledger records.
    pub fn discard_session(&self, session_id: &SessionId) -> Vec<PendingTransaction> {
        let awaiting: Vec<TxId> = {
            let state = self.state.lock().unwrap();
            state
                .pending
                .values()
                .filter(|t| &t.session_id == session_id && t.state == TxState::AwaitingDecision)
                .map(|t| t.tx_id.clone())
                .collect()
        };
        let expired = awaiting.iter().filter_map(|id| self.expire(id).ok()).collect();
        let mut state = self.state.lock().unwrap();
        state.pending.retain(|_, t| &t.session_id != session_id);
        let BankState { otps, pending, .. } = &mut *state;
        otps.retain(|id, _| pending.contains_key(id));
        expired
    }

    pub fn query_account(&self, account_id: &AccountId) -> Result<AccountSummary, BankError> {
        let state = self.state.lock().unwrap();
        let a = state
            .accounts
            .get(account_id)
            .ok_or_else(|| BankError::UnknownAccount(account_id.0.clone()))?;
        Ok(AccountSummary {
            account_id: a.account_id.clone(),
            holder_name: a.holder_name.clone(),
            available_balance: a.balance,
            status: a.status,
        })
    }

    /// Records executed in `[from, to)`, newest first.
    pub fn query_history(
        &self,
        account_id: &AccountId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<TransactionRecord>, BankError> {
        let state = self.state.lock().unwrap();
        if !state.accounts.contains_key(account_id) {
            return Err(BankError::UnknownAccount(account_id.0.clone()));
        }
        let mut out: Vec<TransactionRecord> = state
            .records
            .iter()
            .filter(|r| &r.account_id == account_id && r.executed_at >= from && r.executed_at < to)
            .cloned()
            .collect();
        out.sort_by(|a, b| b.executed_at.cmp(&a.executed_at).then_with(|| b.tx_id.cmp(&a.tx_id)));
        Ok(out)
    }

    /// Spend grouped by transfer reference over the last 30 days.
    pub fn insight(&self, account_id: &AccountId) -> Result<InsightSummary, BankError> {
        let now = self.clock.now();
        let records = self.query_history(account_id, now - Duration::days(30), now + Duration::seconds(1))?;
        let mut by_ref: BTreeMap<String, Money> = BTreeMap::new();
        for r in &records {
            *by_ref.entry(r.reference.clone()).or_default() = by_ref.get(&r.reference).copied().unwrap_or_default() + r.amount;
        }
        let total = records.iter().fold(Money::ZERO, |acc, r| acc + r.amount);
        let mut categories: Vec<SpendCategory> = by_ref
            .into_iter()
            .map(|(name, amount)| SpendCategory { name, amount })
            .collect();
        categories.sort_by(|a, b| b.amount.cmp(&a.amount).then_with(|| a.name.cmp(&b.name)));
        Ok(InsightSummary {
            period_days: 30,
            total_spend: total,
            categories,
        })
    }

    pub fn balance(&self, account_id: &AccountId) -> Option<Money> {
        self.state.lock().unwrap().accounts.get(account_id).map(|a| a.balance)
    }

    pub fn total_balances(&self) -> Money {
        self.state
            .lock()
            .unwrap()
            .accounts
            .values()
            .fold(Money::ZERO, |acc, a| acc + a.balance)
    }

    pub fn external_sink(&self) -> Money {
        self.state.lock().unwrap().external_sink
    }

    pub fn records(&self) -> Vec<TransactionRecord> {
        self.state.lock().unwrap().records.clone()
    }

    pub fn decisions(&self) -> Vec<DecisionRecord> {
        self.state.lock().unwrap().decisions.clone()
    }

    pub fn pending_for_session(&self, session_id: &SessionId) -> Vec<PendingTransaction> {
        self.state
            .lock()
            .unwrap()
            .pending
            .values()
            .filter(|t| &t.session_id == session_id)
            .cloned()
            .collect()
    }

    /// Writes the ledger as JSON Lines.
    pub fn export_records(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut *out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn export_records_to(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.export_records(&mut file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use chrono::TimeZone;

    struct AcceptAll;
    impl DraftValidator for AcceptAll {
        fn revalidate(&self, draft: &TransferDraft) -> Result<TransferKind, String> {
            match draft.amount {
                Some(a) if a.is_positive() => Ok(TransferKind::P2P),
                _ => Err("amount must be greater than zero".into()),
            }
        }
    }

    fn draft(amount_sen: i64) -> TransferDraft {
        TransferDraft {
            recipient_name: Some("John".into()),
            bank_name: Some("Bank ABC".into()),
            account_number: Some("5512345678".into()),
            amount: Some(Money::from_sen(amount_sen)),
            reference: "Funds Transfer".into(),
        }
    }

    fn bank_with(balance_sen: i64) -> (Bank, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 4, 0, 0).unwrap()));
        let seed = SeedFile {
            accounts: vec![SeedAccount {
                account_id: "A1".into(),
                holder_name: "Aina".into(),
                balance: Money::from_sen(balance_sen),
                status: AccountStatus::Active,
            }],
        };
        let aml = AmlList::new(["9988776655".to_string()]);
        (Bank::with_clock(seed, BankConfig::default(), aml, clock.clone()), clock)
    }

    fn sid() -> SessionId {
        SessionId::new("s1")
    }

    fn a1() -> AccountId {
        AccountId::new("A1")
    }

    #[test]
    fn approve_below_threshold_executes() {
        let (bank, _) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P).unwrap();
        assert!(!tx.requires_2fa);
        let done = bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll).unwrap();
        assert_eq!(done.state, TxState::Executed);
        assert_eq!(bank.balance(&a1()), Some(Money::from_sen(490_000)));
        assert_eq!(bank.external_sink(), Money::from_sen(10_000));
        assert_eq!(done.trail, vec![TxState::AwaitingDecision, TxState::Approved, TxState::Executed]);
    }

    #[test]
    fn approve_above_threshold_needs_code() {
        let (bank, _) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(30_000), TransferKind::P2P).unwrap();
        assert!(tx.requires_2fa);
        assert_eq!(bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll), Err(BankError::TwoFaRequired));
        assert_eq!(bank.transaction(&tx.tx_id).unwrap().state, TxState::AwaitingDecision);
        let code = bank.issue_second_factor(&tx.tx_id).unwrap();
        let wrong = if code == "000000" { "111111" } else { "000000" };
        assert_eq!(bank.decide(&tx.tx_id, Decision::Approve, Some(wrong), &AcceptAll), Err(BankError::TwoFaRequired));
        let done = bank.decide(&tx.tx_id, Decision::Approve, Some(&code), &AcceptAll).unwrap();
        assert_eq!(done.state, TxState::Executed);
        assert_eq!(bank.balance(&a1()), Some(Money::from_sen(470_000)));
    }

    #[test]
    fn cumulative_outflow_triggers_2fa_and_resets_next_day() {
        let (bank, clock) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(20_000), TransferKind::P2P).unwrap();
        bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll).unwrap();
        let tx2 = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P).unwrap();
        assert!(tx2.requires_2fa);
        let tx3 = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2M).unwrap();
        assert!(!tx3.requires_2fa);
        // 04:00 UTC is noon in UTC+8; 16:00 UTC is the next local midnight
        clock.advance(Duration::hours(12));
        assert!(!bank.requires_2fa_for(&a1(), Money::from_sen(10_000), TransferKind::P2P).unwrap());
    }

    #[test]
    fn decline_leaves_ledger_alone() {
        let (bank, _) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P).unwrap();
        let out = bank.decide(&tx.tx_id, Decision::Decline, None, &AcceptAll).unwrap();
        assert_eq!(out.state, TxState::Declined(DeclineReason::User));
        assert_eq!(bank.balance(&a1()), Some(Money::from_sen(500_000)));
        assert!(matches!(
            bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll),
            Err(BankError::InvalidState { state: "Declined", .. })
        ));
    }

    #[test]
    fn edit_revalidates() {
        let (bank, _) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(100_000), TransferKind::P2P).unwrap();
        assert!(tx.requires_2fa);
        let edited = bank.decide(&tx.tx_id, Decision::Edit(draft(5_000)), None, &AcceptAll).unwrap();
        assert_eq!(edited.state, TxState::AwaitingDecision);
        assert!(!edited.requires_2fa);
        assert_eq!(edited.trail, vec![TxState::AwaitingDecision, TxState::Edited, TxState::AwaitingDecision]);
        let stale = bank.decide(&tx.tx_id, Decision::Edit(draft(0)), None, &AcceptAll);
        assert!(matches!(stale, Err(BankError::StaleEdit(_))));
        assert_eq!(bank.transaction(&tx.tx_id).unwrap().draft.amount, Some(Money::from_sen(5_000)));
    }

    #[test]
    fn prechecks() {
        let (bank, _) = bank_with(5_000);
        assert_eq!(
            bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P),
            Err(BankError::Precheck(PrecheckFailure::InsufficientFunds))
        );
        let (bank, _) = bank_with(100_000_000);
        assert_eq!(
            bank.create_pending(&sid(), &a1(), draft(1_000_001), TransferKind::P2P),
            Err(BankError::Precheck(PrecheckFailure::LimitExceeded(LimitKind::PerTransaction)))
        );
        let mut d = draft(1_000);
        d.account_number = Some("9988-776655".into());
        assert_eq!(
            bank.create_pending(&sid(), &a1(), d, TransferKind::P2P),
            Err(BankError::Precheck(PrecheckFailure::AmlFlagged))
        );
        assert!(matches!(
            bank.create_pending(&sid(), &AccountId::new("nope"), draft(1), TransferKind::P2P),
            Err(BankError::UnknownAccount(_))
        ));
    }

    #[test]
    fn history_queries() {
        let (bank, clock) = bank_with(500_000);
        let start = clock.now();
        assert_eq!(bank.query_account(&a1()).unwrap().available_balance, Money::from_sen(500_000));
        let tx = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P).unwrap();
        bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll).unwrap();
        clock.advance(Duration::minutes(5));
        let tx = bank.create_pending(&sid(), &a1(), draft(2_000), TransferKind::P2P).unwrap();
        bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll).unwrap();
        let all = bank.query_history(&a1(), start, clock.now() + Duration::seconds(1)).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].amount, Money::from_sen(2_000));
        assert!(bank.query_history(&a1(), start, start).unwrap().is_empty());
        let insight = bank.insight(&a1()).unwrap();
        assert_eq!(insight.total_spend, Money::from_sen(12_000));
    }

    #[test]
    fn discard_session_expires_and_forgets() {
        let (bank, _) = bank_with(500_000);
        let tx = bank.create_pending(&sid(), &a1(), draft(10_000), TransferKind::P2P).unwrap();
        let expired = bank.discard_session(&sid());
        assert_eq!(expired.len(), 1);
        assert_eq!(expired[0].state, TxState::Declined(DeclineReason::Expired));
        assert!(bank.transaction(&tx.tx_id).is_none());
        assert!(bank.decisions().iter().any(|d| d.decision == DecisionKind::Expire));
    }

    #[test]
    fn export_is_json_lines() {
        let (bank, _) = bank_with(500_000);
        for amt in [1_000, 2_000] {
            let tx = bank.create_pending(&sid(), &a1(), draft(amt), TransferKind::P2P).unwrap();
            bank.decide(&tx.tx_id, Decision::Approve, None, &AcceptAll).unwrap();
        }
        let mut buf = Vec::new();
        bank.export_records(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let r: TransactionRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(r.amount, Money::from_sen(2_000));
    }
}
