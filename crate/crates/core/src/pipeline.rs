//! Ordered pipeline driver: Guardrails, Intent, Action, then (on the user's
//! decision) Confirmation.

use std::sync::Arc;
use std::time::Instant;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::backend::{AdapterSet, AgentName, ModelBackend, ModelCallRecord, DEFAULT_RETRY_LIMIT};
use crate::banking::{
    AccountId, AccountSummary, Bank, InsightSummary, PendingTransaction, TransactionRecord, TxState,
};
use crate::canonical::{SchemaId, StructuredOutput};
use crate::envelope::{PipelineEnvelope, Stage, StageRecord};
use crate::faq::{handle_faq_turn, FaqAnswer, FaqConfig, FaqContext, FaqFallback, KnowledgeStore, FALLBACK_MESSAGE};
use crate::guardrails::{
    refusal_message, screen_image, screen_text, GuardrailVerdict, ImageModerator, ImageVerdict, PolicyStore,
    VerdictSource, FAIL_CLOSED_MESSAGE,
};
use crate::intent::{classify_intent, ActionAgentRef, IntentResult, IntentRoutes, REPHRASE_MESSAGE};
use crate::payment::{
    handle_payment_turn, submit_for_execution, BankDirectory, CompletionState, IdentifierRules, OcrEngine,
    PaymentAgentResult, PaymentContext, PaymentSessionState, SubmitError, OCR_UNAVAILABLE_MESSAGE,
};

pub const APOLOGY_MESSAGE: &str = "Sorry, something went wrong on our side. Please try again in a moment.";
pub const REUPLOAD_MESSAGE: &str = "Sorry, I couldn't open that image. Could you upload it again?";
pub const SMALL_TALK_MESSAGE: &str =
    "Hello! I can help you transfer money, check your balance or recent transactions, and answer questions about our services.";
pub const TWO_FA_NOTICE: &str = "This transfer needs a one-time code to approve.";

/// Everything the pipeline needs; read-only once built.
pub struct AgentRegistry {
    pub backend: Arc<dyn ModelBackend>,
    pub adapters: AdapterSet,
    pub policy: Arc<PolicyStore>,
    pub image_moderator: Arc<dyn ImageModerator>,
    pub ocr: Arc<dyn OcrEngine>,
    pub routes: IntentRoutes,
    pub directory: BankDirectory,
    pub identifier_rules: IdentifierRules,
    pub knowledge: Arc<KnowledgeStore>,
    pub bank: Arc<Bank>,
    pub faq: FaqConfig,
    pub retry_limit: u32,
}

impl AgentRegistry {
    /// Registry over built-in data files and the given backend and bank.
    pub fn builtin(backend: Arc<dyn ModelBackend>, bank: Arc<Bank>) -> Self {
        AgentRegistry {
            backend,
            adapters: AdapterSet::builtin(),
            policy: Arc::new(PolicyStore::from_json(crate::defaults::BLOCKLIST_JSON).expect("built-in blocklist parses")),
            image_moderator: Arc::new(crate::guardrails::FixtureImageModerator::builtin()),
            ocr: Arc::new(crate::payment::FixtureOcr::builtin()),
            routes: IntentRoutes::default(),
            directory: BankDirectory::builtin(),
            identifier_rules: IdentifierRules::default(),
            knowledge: Arc::new(KnowledgeStore::builtin()),
            bank,
            faq: FaqConfig::default(),
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }

    fn payment_ctx(&self) -> PaymentContext<'_> {
        PaymentContext {
            backend: self.backend.as_ref(),
            spec: self.adapters.get(AgentName::Payment),
            directory: &self.directory,
            rules: &self.identifier_rules,
            retry_limit: self.retry_limit,
        }
    }

    fn faq_ctx(&self) -> FaqContext<'_> {
        FaqContext {
            backend: self.backend.as_ref(),
            spec: self.adapters.get(AgentName::Faq),
            store: &self.knowledge,
            config: self.faq,
            retry_limit: self.retry_limit,
        }
    }
}

/// Structured result of the Action stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "agent")]
pub enum ActionOutput {
    #[serde(rename_all = "camelCase")]
    Payment {
        result: PaymentAgentResult,
        completion: CompletionState,
        tx_id: Option<String>,
        requires_2fa: Option<bool>,
        precheck_failure: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Faq {
        answer: FaqAnswer,
        context_doc_ids: Vec<String>,
        fallback: Option<FaqFallback>,
    },
    Account {
        summary: AccountSummary,
    },
    History {
        records: Vec<TransactionRecord>,
    },
    Insight {
        summary: InsightSummary,
    },
    SmallTalk {
        message: String,
    },
}

impl StructuredOutput for ActionOutput {
    const SCHEMA: SchemaId = SchemaId::ActionOutput;

    fn validate(&self) -> Result<(), String> {
        match self {
            ActionOutput::Payment { result, .. } => result.validate(),
            ActionOutput::Faq { answer, .. } => answer.validate(),
            ActionOutput::SmallTalk { message } if message.trim().is_empty() => Err("empty message".into()),
            _ => Ok(()),
        }
    }
}

/// Structured result of the Confirmation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfirmationOutcome {
    pub tx_id: String,
    pub decision: String,
    pub accepted: bool,
    pub state: TxState,
    pub amount: crate::money::Money,
}

impl StructuredOutput for ConfirmationOutcome {
    const SCHEMA: SchemaId = SchemaId::ConfirmationOutcome;

    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InputRejected {
    #[error("turn has neither text nor attachments")]
    EmptyTurn,
    #[error(transparent)]
    History(#[from] crate::envelope::EnvelopeError),
    #[error("envelope already has a stage trace")]
    NotFresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
#[error("{stage} stage failed: {cause}")]
pub struct AgentFailure {
    pub stage: Stage,
    pub cause: String,
}

/// Per-session inputs to a turn.
pub struct TurnContext<'a> {
    pub account_id: &'a AccountId,
    pub payment: &'a mut PaymentSessionState,
    /// Park ready drafts at the bank awaiting a decision.
    pub submit_ready: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub envelope: PipelineEnvelope,
    pub verdict: Option<GuardrailVerdict>,
    pub verdict_source: Option<VerdictSource>,
    pub intent: Option<IntentResult>,
    pub action: Option<ActionOutput>,
    pub pending: Option<PendingTransaction>,
    pub failure: Option<AgentFailure>,
    /// Every backend call made for this turn, for cost accounting.
    pub calls: Vec<ModelCallRecord>,
}

impl PipelineOutcome {
    pub fn reply(&self) -> &str {
        self.envelope.final_reply.as_deref().unwrap_or_default()
    }

    /// Transfers reported by the payment agent, if it ran.
    pub fn transfers(&self) -> Option<&PaymentAgentResult> {
        match &self.action {
            Some(ActionOutput::Payment { result, .. }) => Some(result),
            _ => None,
        }
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

struct Run {
    out: PipelineOutcome,
}

impl Run {
    fn push<T: StructuredOutput>(&mut self, stage: Stage, output: &T, started: Instant, call: Option<ModelCallRecord>) {
        if let Some(c) = &call {
            self.out.calls.push(c.clone());
        }
        let record = StageRecord::new(stage, output, elapsed_ms(started), call);
        self.out
            .envelope
            .push_record(record)
            .expect("pipeline appends stages in order");
    }

    fn finish(mut self, reply: impl Into<String>) -> PipelineOutcome {
        self.out.envelope.final_reply = Some(reply.into());
        self.out
    }

    fn fail(mut self, stage: Stage, cause: impl Into<String>, reply: &str) -> PipelineOutcome {
        self.out.failure = Some(AgentFailure {
            stage,
            cause: cause.into(),
        });
        self.finish(reply)
    }
}

/// Runs one user turn through the stages in order.
pub fn run_pipeline(
    envelope: PipelineEnvelope,
    registry: &AgentRegistry,
    ctx: TurnContext<'_>,
) -> Result<PipelineOutcome, InputRejected> {
    if !envelope.stage_trace.is_empty() {
        return Err(InputRejected::NotFresh);
    }
    if !envelope.turn.is_well_formed() {
        return Err(InputRejected::EmptyTurn);
    }
    crate::envelope::validate_history(&envelope.history)?;

    let mut run = Run {
        out: PipelineOutcome {
            envelope,
            verdict: None,
            verdict_source: None,
            intent: None,
            action: None,
            pending: None,
            failure: None,
            calls: Vec::new(),
        },
    };
    let turn = run.out.envelope.turn.clone();
    let history = run.out.envelope.history.clone();

    // Guardrails: images first, then text
    let started = Instant::now();
    for attachment in &turn.attachments {
        match screen_image(registry.image_moderator.as_ref(), attachment) {
            ImageVerdict::Allow => {}
            ImageVerdict::Block { category: Some(category), .. } => {
                let verdict = GuardrailVerdict::violation(category);
                run.push(Stage::Guardrails, &verdict, started, None);
                run.out.verdict = Some(verdict);
                run.out.verdict_source = Some(VerdictSource::Model);
                return Ok(run.finish(refusal_message(category)));
            }
            ImageVerdict::Block { category: None, reason } => {
                return Ok(run.fail(Stage::Guardrails, format!("attachment {}: {reason}", attachment.id), REUPLOAD_MESSAGE));
            }
        }
    }
    let verdict = if turn.text.trim().is_empty() {
        GuardrailVerdict::safe()
    } else {
        let policy = registry.policy.snapshot();
        match screen_text(
            &turn,
            &history,
            &policy,
            registry.backend.as_ref(),
            registry.adapters.get(AgentName::Guardrails),
            registry.retry_limit,
        ) {
            Ok(o) => {
                run.out.verdict_source = Some(o.source);
                run.push(Stage::Guardrails, &o.verdict, started, o.call);
                o.verdict
            }
            Err(e) => return Ok(run.fail(Stage::Guardrails, e.to_string(), FAIL_CLOSED_MESSAGE)),
        }
    };
    if turn.text.trim().is_empty() {
        run.push(Stage::Guardrails, &verdict, started, None);
        run.out.verdict_source = Some(VerdictSource::Model);
    }
    run.out.verdict = Some(verdict.clone());
    if !verdict.is_safe {
        let reply = verdict
            .message
            .clone()
            .or_else(|| verdict.guardrail_violation.map(|c| refusal_message(c).to_string()))
            .unwrap_or_else(|| FAIL_CLOSED_MESSAGE.to_string());
        return Ok(run.finish(reply));
    }

    // Intent; an image-only turn is treated as a transfer request
    let started = Instant::now();
    let intent_result = if turn.text.trim().is_empty() {
        IntentResult::routed(crate::intent::IntentCategory::Payment)
    } else {
        let outcome = classify_intent(
            &turn,
            &history,
            registry.backend.as_ref(),
            registry.adapters.get(AgentName::Intent),
            registry.retry_limit,
        );
        if let Some(e) = outcome.failure {
            return Ok(run.fail(Stage::Intent, e.to_string(), REPHRASE_MESSAGE));
        }
        run.push(Stage::Intent, &outcome.result, started, outcome.call);
        outcome.result
    };
    if turn.text.trim().is_empty() {
        run.push(Stage::Intent, &intent_result, started, None);
    }
    run.out.intent = Some(intent_result.clone());
    let handler = match registry.routes.dispatch(&intent_result) {
        Ok(h) => h,
        Err(crate::intent::RouteError::ClarificationPending) => {
            let reply = intent_result.message.clone().unwrap_or_else(|| REPHRASE_MESSAGE.to_string());
            return Ok(run.finish(reply));
        }
        Err(e) => return Ok(run.fail(Stage::Action, e.to_string(), APOLOGY_MESSAGE)),
    };

    // Action
    let started = Instant::now();
    match handler {
        ActionAgentRef::PaymentAgent => {
            let mut ocr_texts = Vec::new();
            for a in &turn.attachments {
                match registry.ocr.extract(a) {
                    Ok(t) => ocr_texts.push(t),
                    Err(e) => return Ok(run.fail(Stage::Action, e.to_string(), OCR_UNAVAILABLE_MESSAGE)),
                }
            }
            let ocr = (!ocr_texts.is_empty()).then(|| ocr_texts.join("\n"));
            let pay = handle_payment_turn(&registry.payment_ctx(), ctx.payment, &turn, &history, ocr.as_deref());
            if let Some(e) = pay.failure {
                return Ok(run.fail(Stage::Action, e.to_string(), &pay.result.message));
            }
            let mut reply = pay.result.message.clone();
            let mut tx_id = None;
            let mut requires_2fa = None;
            let mut precheck_failure = None;
            if let (true, Some(draft)) = (ctx.submit_ready, pay.ready_draft()) {
                match submit_for_execution(
                    draft,
                    &run.out.envelope.session_id,
                    ctx.account_id,
                    &registry.bank,
                    &registry.directory,
                    &registry.identifier_rules,
                ) {
                    Ok(tx) => {
                        // the bank owns the draft from here; the next request starts fresh
                        ctx.payment.draft = None;
                        tx_id = Some(tx.tx_id.0.clone());
                        requires_2fa = Some(tx.requires_2fa);
                        if tx.requires_2fa {
                            reply = format!("{reply} {TWO_FA_NOTICE}");
                        }
                        run.out.pending = Some(tx);
                    }
                    Err(e) => {
                        if let SubmitError::Bank(crate::banking::BankError::Precheck(p)) = &e {
                            precheck_failure = Some(p.code().to_string());
                        }
                        reply = e.user_message();
                    }
                }
            }
            let output = ActionOutput::Payment {
                result: pay.result,
                completion: pay.completion,
                tx_id,
                requires_2fa,
                precheck_failure,
            };
            run.push(Stage::Action, &output, started, pay.call);
            run.out.action = Some(output);
            Ok(run.finish(reply))
        }
        ActionAgentRef::FaqAgent => {
            let faq = handle_faq_turn(&registry.faq_ctx(), &turn, &history);
            if let Some(c) = faq.reformulation_call.clone() {
                run.out.calls.push(c);
            }
            if faq.fallback == Some(FaqFallback::AgentFailure) {
                let cause = faq.failure.map(|e| e.to_string()).unwrap_or_default();
                return Ok(run.fail(Stage::Action, cause, FALLBACK_MESSAGE));
            }
            let reply = faq.answer.message.clone();
            let output = ActionOutput::Faq {
                answer: faq.answer,
                context_doc_ids: faq.context_doc_ids,
                fallback: faq.fallback,
            };
            run.push(Stage::Action, &output, started, faq.answer_call);
            run.out.action = Some(output);
            Ok(run.finish(reply))
        }
        ActionAgentRef::AccountQuery => match registry.bank.query_account(ctx.account_id) {
            Ok(summary) => {
                let reply = format!(
                    "Your available balance is {} in account {}.",
                    summary.available_balance, summary.account_id
                );
                let output = ActionOutput::Account { summary };
                run.push(Stage::Action, &output, started, None);
                run.out.action = Some(output);
                Ok(run.finish(reply))
            }
            Err(e) => Ok(run.fail(Stage::Action, e.to_string(), APOLOGY_MESSAGE)),
        },
        ActionAgentRef::HistoryQuery => {
            let now = registry.bank.now();
            match registry.bank.query_history(ctx.account_id, now - Duration::days(30), now + Duration::days(1)) {
                Ok(records) => {
                    let reply = history_reply(&records);
                    let output = ActionOutput::History { records };
                    run.push(Stage::Action, &output, started, None);
                    run.out.action = Some(output);
                    Ok(run.finish(reply))
                }
                Err(e) => Ok(run.fail(Stage::Action, e.to_string(), APOLOGY_MESSAGE)),
            }
        }
        ActionAgentRef::InsightQuery => match registry.bank.insight(ctx.account_id) {
            Ok(summary) => {
                let reply = insight_reply(&summary);
                let output = ActionOutput::Insight { summary };
                run.push(Stage::Action, &output, started, None);
                run.out.action = Some(output);
                Ok(run.finish(reply))
            }
            Err(e) => Ok(run.fail(Stage::Action, e.to_string(), APOLOGY_MESSAGE)),
        },
        ActionAgentRef::SmallTalk => {
            let output = ActionOutput::SmallTalk {
                message: SMALL_TALK_MESSAGE.to_string(),
            };
            run.push(Stage::Action, &output, started, None);
            run.out.action = Some(output);
            Ok(run.finish(SMALL_TALK_MESSAGE))
        }
    }
}

fn history_reply(records: &[TransactionRecord]) -> String {
    if records.is_empty() {
        return "You have no transfers in the last 30 days.".to_string();
    }
    let lines: Vec<String> = records
        .iter()
        .take(5)
        .map(|r| format!("- {} to {} ({})", r.amount, r.counterparty_name, r.reference))
        .collect();
    format!("Here are your most recent transfers:\n{}", lines.join("\n"))
}

fn insight_reply(summary: &InsightSummary) -> String {
    if summary.categories.is_empty() {
        return "You haven't made any transfers in the last 30 days.".to_string();
    }
    let top = &summary.categories[0];
    format!(
        "In the last {} days you transferred {} in total. Your biggest category was \"{}\" at {}.",
        summary.period_days, summary.total_spend, top.name, top.amount
    )
}

/// Record for the Confirmation stage, written when the user decides.
pub fn confirmation_record(outcome: &ConfirmationOutcome, latency_ms: u64) -> StageRecord {
    StageRecord::new(Stage::Confirmation, outcome, latency_ms, None)
}

