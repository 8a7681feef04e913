use chatbank_core::banking::{AccountId, TxId};
use chatbank_core::envelope::{ChatTurn, SessionId};
use chatbank_core::payment::PaymentSessionState;
use chrono::{DateTime, Utc};

/// Everything the gateway remembers about a conversation. Dropped whole on
/// close or expiry.
#[derive(Debug)]
pub struct Session {
    pub id: SessionId,
    pub account_id: AccountId,
    pub history: Vec<ChatTurn>,
    pub payment: PaymentSessionState,
    pub pending_tx: Option<TxId>,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
    pub(crate) closed: bool,
}

impl Session {
    pub fn new(id: SessionId, account_id: AccountId, now: DateTime<Utc>) -> Self {
        Session {
            id,
            account_id,
            history: Vec::new(),
            payment: PaymentSessionState::default(),
            pending_tx: None,
            created_at: now,
            last_activity: now,
            closed: false,
        }
    }

    /// Appends one exchange, keeping at most `cap` exchanges.
    pub fn record_exchange(&mut self, user: ChatTurn, assistant: ChatTurn, cap: usize) {
        self.history.push(user);
        self.history.push(assistant);
        let keep = cap * 2;
        if self.history.len() > keep {
            self.history.drain(..self.history.len() - keep);
        }
    }

    pub(crate) fn wipe(&mut self) {
        self.closed = true;
        self.history = Vec::new();
        self.payment = PaymentSessionState::default();
        self.pending_tx = None;
    }
}
