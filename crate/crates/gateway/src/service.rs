//! Transport-independent gateway logic. The axum layer in `routes` is a thin
//! wrapper over these methods.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chatbank_core::banking::{AccountId, Decision, PendingTransaction, TxId, TxState};
use chatbank_core::clock::Clock;
use chatbank_core::config::AppConfig;
use chatbank_core::envelope::{ChatTurn, PipelineEnvelope, SessionId, Stage};
use chatbank_core::guardrails::PolicyError;
use chatbank_core::payment::PaymentValidator;
use chatbank_core::pipeline::{
    confirmation_record, run_pipeline, ActionOutput, AgentRegistry, ConfirmationOutcome, PipelineOutcome, TurnContext,
};
use chrono::{DateTime, Duration, Utc};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::api::{
    Clarification, CloseReply, DecisionKindWire, DecisionReply, DecisionRequest, IngestReply, MessageReply,
    MessageView, OpenSessionResponse, PostMessageRequest, ReloadReply, SecondFactorChallenge, SessionView,
    TransactionPreview,
};
use crate::audit::{AuditEntry, AuditKind, AuditLog};
use crate::error::ApiError;
use crate::session::Session;

type SessionHandle = Arc<AsyncMutex<Session>>;

#[derive(Debug, Clone)]
pub struct GatewaySettings {
    pub history_cap: usize,
    pub idle_timeout: Duration,
    /// Admin endpoints refuse every request when unset.
    pub admin_token: Option<String>,
    /// Reloaded when the reload request has an empty body.
    pub blocklist_path: Option<PathBuf>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            history_cap: chatbank_core::envelope::DEFAULT_HISTORY_CAP,
            idle_timeout: Duration::minutes(15),
            admin_token: None,
            blocklist_path: None,
        }
    }
}

impl GatewaySettings {
    /// Reads the admin token from the environment variable named in config.
    pub fn from_config(config: &AppConfig) -> Self {
        GatewaySettings {
            history_cap: config.pipeline.history_cap,
            idle_timeout: Duration::seconds(config.session.idle_timeout_secs as i64),
            admin_token: std::env::var(&config.gateway.admin_token_env).ok().filter(|t| !t.is_empty()),
            blocklist_path: config.data.blocklist.clone(),
        }
    }
}

pub struct Gateway {
    registry: Arc<AgentRegistry>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<SessionId, SessionHandle>>,
    audit: AuditLog,
    settings: GatewaySettings,
}

fn stage_label(stage: Stage, out: &PipelineOutcome) -> String {
    match stage {
        Stage::Guardrails => match &out.verdict {
            Some(v) => v.guardrail_violation.map_or("safe", |c| c.label()).to_string(),
            None => "unknown".into(),
        },
        Stage::Intent => out.intent.as_ref().map_or("unknown".into(), |i| i.intent.label().to_string()),
        Stage::Action => match &out.action {
            Some(ActionOutput::Payment { completion, .. }) => {
                let state = serde_json::to_value(completion).ok();
                let state = state.as_ref().and_then(|v| v["state"].as_str()).unwrap_or("unknown");
                format!("payment/{state}")
            }
            Some(ActionOutput::Faq { fallback: None, .. }) => "faq/answered".into(),
            Some(ActionOutput::Faq { .. }) => "faq/fallback".into(),
            Some(ActionOutput::Account { .. }) => "account".into(),
            Some(ActionOutput::History { .. }) => "history".into(),
            Some(ActionOutput::Insight { .. }) => "insight".into(),
            Some(ActionOutput::SmallTalk { .. }) => "smallTalk".into(),
            None => "unknown".into(),
        },
        Stage::Confirmation => "confirmation".into(),
    }
}

fn decision_message(tx: &PendingTransaction) -> String {
    match &tx.state {
        TxState::Executed => format!(
            "Done. {} has been sent to {}.",
            tx.amount(),
            tx.draft.recipient_name.as_deref().unwrap_or("the recipient")
        ),
        TxState::Failed(code) => format!("The transfer could not be completed ({code})."),
        TxState::Declined(_) => "Okay, the transfer has been cancelled.".to_string(),
        TxState::AwaitingDecision => format!("Updated: {}. Please approve or decline.", tx.draft.summary()),
        other => format!("The transfer is now {}.", other.name()),
    }
}

impl Gateway {
    pub fn new(registry: Arc<AgentRegistry>, clock: Arc<dyn Clock>, audit: AuditLog, settings: GatewaySettings) -> Self {
        Gateway {
            registry,
            clock,
            sessions: Mutex::new(HashMap::new()),
            audit,
            settings,
        }
    }

    pub fn registry(&self) -> &AgentRegistry {
        &self.registry
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn log(&self, entry: AuditEntry) {
        self.audit.append(entry, self.now());
    }

    fn handle(&self, id: &SessionId) -> Result<SessionHandle, ApiError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or(ApiError::UnknownSession)
    }

    /// Locks a session for a turn or decision; a held lock means PipelineBusy.
    fn claim(&self, id: &SessionId) -> Result<OwnedMutexGuard<Session>, ApiError> {
        let guard = self.handle(id)?.try_lock_owned().map_err(|_| ApiError::PipelineBusy)?;
        if guard.closed {
            return Err(ApiError::UnknownSession);
        }
        Ok(guard)
    }

    pub fn open_session(&self, account_id: &str) -> Result<OpenSessionResponse, ApiError> {
        let account = AccountId::new(account_id);
        if !self.registry.bank.has_account(&account) {
            return Err(ApiError::UnknownAccount);
        }
        let id = SessionId::new(uuid::Uuid::new_v4().simple().to_string());
        let now = self.now();
        let session = Session::new(id.clone(), account, now);
        self.sessions
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(AsyncMutex::new(session)));
        self.log(AuditEntry::new(AuditKind::SessionOpened).session(&id));
        Ok(OpenSessionResponse {
            session_id: id,
            account_id: account_id.to_string(),
            created_at: now,
            idle_timeout_secs: self.settings.idle_timeout.num_seconds().max(0) as u64,
        })
    }

    /// Discards everything held for the session. Only audit events remain.
    fn close_locked(&self, session: &mut Session, kind: AuditKind) -> usize {
        if session.closed {
            return 0;
        }
        self.sessions.lock().unwrap().remove(&session.id);
        let expired = self.registry.bank.discard_session(&session.id);
        for tx in &expired {
            self.log(
                AuditEntry::new(AuditKind::TransactionExpired)
                    .session(&session.id)
                    .label(format!("expire/{}", tx.state.name()))
                    .digest_of(tx.tx_id.0.clone()),
            );
        }
        self.log(AuditEntry::new(kind).session(&session.id));
        session.wipe();
        expired.len()
    }

    pub async fn close_session(&self, id: &SessionId) -> Result<CloseReply, ApiError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().await;
        if session.closed {
            return Err(ApiError::UnknownSession);
        }
        let n = self.close_locked(&mut session, AuditKind::SessionClosed);
        Ok(CloseReply {
            session_id: id.clone(),
            closed: true,
            expired_transactions: n,
        })
    }

    /// Closes sessions idle for at least the timeout. Sessions with a turn in
    /// flight are skipped. Returns how many were closed.
    pub fn expire_idle(&self) -> usize {
        let now = self.now();
        let handles: Vec<SessionHandle> = self.sessions.lock().unwrap().values().cloned().collect();
        let mut closed = 0;
        for h in handles {
            let Ok(mut s) = h.try_lock() else { continue };
            if now - s.last_activity >= self.settings.idle_timeout {
                self.close_locked(&mut s, AuditKind::SessionExpired);
                closed += 1;
            }
        }
        closed
    }

    pub async fn view_session(&self, id: &SessionId) -> Result<SessionView, ApiError> {
        self.expire_idle();
        let handle = self.handle(id)?;
        let s = handle.lock().await;
        if s.closed {
            return Err(ApiError::UnknownSession);
        }
        let preview = s
            .pending_tx
            .as_ref()
            .and_then(|t| self.registry.bank.transaction(t))
            .filter(|t| t.state == TxState::AwaitingDecision)
            .map(|t| TransactionPreview::from(&t));
        Ok(SessionView {
            session_id: s.id.clone(),
            account_id: s.account_id.0.clone(),
            created_at: s.created_at,
            last_activity: s.last_activity,
            messages: s.history.iter().map(MessageView::from).collect(),
            preview,
        })
    }

    fn issue_code(&self, session: &SessionId, tx: &PendingTransaction) -> Option<SecondFactorChallenge> {
        if !tx.requires_2fa {
            return None;
        }
        match self.registry.bank.issue_second_factor(&tx.tx_id) {
            Ok(code) => {
                self.log(AuditEntry::new(AuditKind::SecondFactorIssued).session(session));
                Some(SecondFactorChallenge::simulated(code))
            }
            Err(e) => {
                tracing::warn!("cannot issue code: {e}");
                None
            }
        }
    }

    pub async fn post_message(&self, id: &SessionId, req: PostMessageRequest) -> Result<MessageReply, ApiError> {
        self.expire_idle();
        let mut session = self.claim(id)?;
        let mut turn = ChatTurn::user(req.text).with_attachments(req.attachments);
        turn.timestamp = self.now();
        let envelope = PipelineEnvelope::new(id.clone(), turn.clone(), session.history.clone(), self.settings.history_cap);

        // the pipeline may block on a remote backend
        let registry = self.registry.clone();
        let (mut session, result) = tokio::task::spawn_blocking(move || {
            let s = &mut *session;
            let result = run_pipeline(
                envelope,
                &registry,
                TurnContext {
                    account_id: &s.account_id,
                    payment: &mut s.payment,
                    submit_ready: true,
                },
            );
            (session, result)
        })
        .await
        .map_err(|e| ApiError::Internal(format!("pipeline task: {e}")))?;
        let out = result.map_err(|e| ApiError::InvalidInput(e.to_string()))?;

        for record in &out.envelope.stage_trace {
            self.log(
                AuditEntry::new(AuditKind::StageCompleted)
                    .session(id)
                    .stage(record.stage)
                    .label(stage_label(record.stage, &out))
                    .digest_of(record.verdict_digest.clone()),
            );
        }
        if let Some(f) = &out.failure {
            tracing::warn!(session = %id, stage = %f.stage, "stage failed: {}", f.cause);
            self.log(AuditEntry::new(AuditKind::StageFailed).session(id).stage(f.stage));
        }

        let mut second_factor = None;
        if let Some(tx) = &out.pending {
            // one pending transaction per session; a newer one replaces it
            if let Some(old) = session.pending_tx.replace(tx.tx_id.clone()) {
                if let Ok(expired) = self.registry.bank.expire(&old) {
                    self.log(
                        AuditEntry::new(AuditKind::TransactionExpired)
                            .session(id)
                            .label(format!("expire/{}", expired.state.name()))
                            .digest_of(old.0),
                    );
                }
            }
            second_factor = self.issue_code(id, tx);
        }

        let safe = out.verdict.as_ref().map(|v| v.is_safe);
        // refused input is not kept as context
        if safe == Some(true) {
            let reply = ChatTurn {
                timestamp: self.now(),
                ..ChatTurn::assistant(out.reply())
            };
            session.record_exchange(turn, reply, self.settings.history_cap);
        }
        session.last_activity = self.now();

        let clarification = match &out.action {
            Some(ActionOutput::Payment { completion, .. }) => Clarification::from_completion(completion),
            None if out.intent.is_some() && out.failure.is_none() => Some(Clarification::Intent),
            _ => None,
        };
        Ok(MessageReply {
            session_id: id.clone(),
            final_reply: out.reply().to_string(),
            stages: out.envelope.stages(),
            is_safe: safe,
            violation: out
                .verdict
                .as_ref()
                .and_then(|v| v.guardrail_violation)
                .map(|c| c.label().to_string()),
            intent: out.intent.as_ref().map(|i| i.intent.label().to_string()),
            preview: out.pending.as_ref().map(TransactionPreview::from),
            clarification,
            second_factor,
            failed_stage: out.failure.as_ref().map(|f| f.stage),
        })
    }

    pub async fn decide(&self, id: &SessionId, tx_id: &str, req: DecisionRequest) -> Result<DecisionReply, ApiError> {
        self.expire_idle();
        let mut session = self.claim(id)?;
        let tx_id = TxId(tx_id.to_string());
        let current = self
            .registry
            .bank
            .transaction(&tx_id)
            .filter(|t| t.session_id == *id)
            .ok_or(ApiError::UnknownTransaction)?;
        let decision = match (req.decision, req.draft) {
            (DecisionKindWire::Approve, _) => Decision::Approve,
            (DecisionKindWire::Decline, _) => Decision::Decline,
            (DecisionKindWire::Edit, Some(d)) => Decision::Edit(d),
            (DecisionKindWire::Edit, None) => return Err(ApiError::InvalidInput("edit needs a draft".into())),
        };
        let started = Instant::now();
        let validator = PaymentValidator {
            directory: &self.registry.directory,
            rules: &self.registry.identifier_rules,
        };
        let result = self
            .registry
            .bank
            .decide(&tx_id, decision, req.second_factor.as_deref(), &validator);
        session.last_activity = self.now();

        let after = result.as_ref().map_or(current, |t| t.clone());
        let outcome = ConfirmationOutcome {
            tx_id: tx_id.0.clone(),
            decision: format!("{:?}", req.decision).to_lowercase(),
            accepted: result.is_ok(),
            state: after.state.clone(),
            amount: after.amount(),
        };
        let record = confirmation_record(&outcome, started.elapsed().as_millis() as u64);
        self.log(
            AuditEntry::new(AuditKind::StageCompleted)
                .session(id)
                .stage(Stage::Confirmation)
                .label(format!(
                    "{}/{}/{}",
                    outcome.decision,
                    if outcome.accepted { "accepted" } else { "refused" },
                    after.state.name()
                ))
                .digest_of(record.verdict_digest),
        );

        let tx = result?;
        let mut second_factor = None;
        let mut preview = None;
        if tx.state.is_terminal() {
            session.pending_tx = None;
        } else if tx.state == TxState::AwaitingDecision {
            second_factor = self.issue_code(id, &tx);
            preview = Some(TransactionPreview::from(&tx));
        }
        Ok(DecisionReply {
            tx_id: tx_id.0,
            decision: req.decision,
            message: decision_message(&tx),
            state: tx.state,
            available_balance: self.registry.bank.balance(&session.account_id),
            preview,
            second_factor,
        })
    }

    fn authorize(&self, token: Option<&str>) -> Result<(), ApiError> {
        match (&self.settings.admin_token, token) {
            (Some(want), Some(got)) if want == got => Ok(()),
            _ => {
                self.log(AuditEntry::new(AuditKind::AdminAuthFailed));
                Err(ApiError::AuthFailure)
            }
        }
    }

    pub fn reload_blocklist(&self, token: Option<&str>, body: &str) -> Result<ReloadReply, ApiError> {
        self.authorize(token)?;
        let policy = &self.registry.policy;
        let result = if body.trim().is_empty() {
            match &self.settings.blocklist_path {
                Some(p) => policy.reload_from_path(p),
                None => return Err(ApiError::InvalidInput("empty body and no blocklist path configured".into())),
            }
        } else {
            policy.reload(body)
        };
        match result {
            Ok(p) => {
                self.log(AuditEntry::new(AuditKind::BlocklistReloaded).label(format!("v{}", p.version)));
                Ok(ReloadReply {
                    version: p.version,
                    entries: p.phrases().len(),
                })
            }
            Err(PolicyError::Parse(e)) => {
                self.log(AuditEntry::new(AuditKind::AdminParseFailed).label("blocklist"));
                Err(ApiError::ParseError(format!("blocklist does not parse: {e}")))
            }
            Err(e) => Err(ApiError::Internal(e.to_string())),
        }
    }

    pub fn ingest_knowledge(&self, token: Option<&str>, body: &str) -> Result<IngestReply, ApiError> {
        self.authorize(token)?;
        match self.registry.knowledge.ingest_jsonl(body) {
            Ok(snap) => {
                self.log(AuditEntry::new(AuditKind::KnowledgeIngested).label(format!("v{}", snap.version())));
                Ok(IngestReply {
                    version: snap.version(),
                    documents: snap.len(),
                })
            }
            Err(e) => {
                self.log(AuditEntry::new(AuditKind::AdminParseFailed).label("knowledge"));
                Err(ApiError::ParseError(e.to_string()))
            }
        }
    }
}

