//! Replays test suites through the pipeline and scores the results.

mod report;
mod suite;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banking::AccountId;
use crate::config::EvalSection;
use crate::envelope::{history_from_exchanges, ChatTurn, Language, PipelineEnvelope, SessionId, DEFAULT_HISTORY_CAP};
use crate::guardrails::ViolationCategory;
use crate::intent::IntentCategory;
use crate::payment::{PaymentSessionState, TransferDraft};
use crate::pipeline::{run_pipeline, ActionOutput, AgentRegistry, PipelineOutcome, TurnContext};

pub use report::{
    emit_report, gate, Axis, EvalReport, GateOutcome, Metrics, ReportFormat, Rubric, RubricError, AXIS_NAMES,
};
pub use suite::{load_suite, parse_suite, repair_bracketed_objects, LoadedSuite, RejectedCase, SuiteError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastExchange {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CaseKind {
    Transfer,
    Intent,
    Guardrail,
    Faq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GroundTruth {
    Transfers(Vec<TransferDraft>),
    Intent(IntentCategory),
    #[serde(rename_all = "camelCase")]
    Guardrail {
        is_safe: bool,
        violation: Option<ViolationCategory>,
    },
    #[serde(rename_all = "camelCase")]
    Faq {
        expected_doc_ids: Vec<String>,
    },
}

impl GroundTruth {
    pub fn kind(&self) -> CaseKind {
        match self {
            GroundTruth::Transfers(_) => CaseKind::Transfer,
            GroundTruth::Intent(_) => CaseKind::Intent,
            GroundTruth::Guardrail { .. } => CaseKind::Guardrail,
            GroundTruth::Faq { .. } => CaseKind::Faq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestCase {
    pub case_id: String,
    /// First line of the case in its suite file.
    pub line: usize,
    pub message: String,
    pub language: Language,
    pub history: Vec<PastExchange>,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseResult {
    pub case_id: String,
    pub kind: CaseKind,
    pub correct: bool,
    /// Why the case failed.
    pub detail: Option<String>,
    pub latency_ms: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

/// Field-exact comparison of transfer lists, amounts in sen.
pub fn compare_transfers(expected: &[TransferDraft], actual: &[TransferDraft]) -> Result<(), String> {
    if expected.len() != actual.len() {
        return Err(format!("expected {} transfers, got {}", expected.len(), actual.len()));
    }
    for (i, (e, a)) in expected.iter().zip(actual).enumerate() {
        let fields = [
            ("recipientName", e.recipient_name != a.recipient_name),
            ("bankName", e.bank_name != a.bank_name),
            ("accountNumber", e.account_number != a.account_number),
            ("amount", e.amount.map(|m| m.sen()) != a.amount.map(|m| m.sen())),
            ("reference", e.reference != a.reference),
        ];
        let wrong: Vec<&str> = fields.iter().filter(|(_, bad)| *bad).map(|(n, _)| *n).collect();
        if !wrong.is_empty() {
            return Err(format!("transfer {i}: {} differ", wrong.join(", ")));
        }
    }
    Ok(())
}

fn judge(truth: &GroundTruth, out: &PipelineOutcome) -> Result<(), String> {
    match truth {
        GroundTruth::Transfers(expected) => match out.transfers() {
            Some(result) => compare_transfers(expected, &result.transfers),
            None => Err("payment agent did not run".into()),
        },
        GroundTruth::Intent(expected) => match &out.intent {
            Some(r) if r.intent == *expected => Ok(()),
            Some(r) => Err(format!("intent {} instead of {expected}", r.intent)),
            None => Err("intent stage did not run".into()),
        },
        GroundTruth::Guardrail { is_safe, violation } => match &out.verdict {
            Some(v) if v.is_safe == *is_safe && v.guardrail_violation == *violation => Ok(()),
            Some(v) => Err(format!(
                "verdict safe={} violation={:?}",
                v.is_safe,
                v.guardrail_violation.map(|c| c.label())
            )),
            None => Err("no guardrail verdict".into()),
        },
        GroundTruth::Faq { expected_doc_ids } => match &out.action {
            Some(ActionOutput::Faq {
                context_doc_ids,
                fallback: None,
                ..
            }) => match context_doc_ids.first() {
                Some(top) if expected_doc_ids.contains(top) => Ok(()),
                top => Err(format!("top document {top:?}")),
            },
            Some(ActionOutput::Faq { fallback: Some(f), .. }) => Err(format!("fallback {f:?}")),
            _ => Err("FAQ agent did not run".into()),
        },
    }
}

/// Runs one case in its own session with nothing submitted to the bank.
pub fn run_case(case: &TestCase, registry: &AgentRegistry, account_id: &AccountId, settings: &EvalSection) -> CaseResult {
    let history: Vec<ChatTurn> =
        history_from_exchanges(case.history.iter().map(|x| (x.user.as_str(), x.assistant.as_str())));
    let envelope = PipelineEnvelope::new(
        SessionId::new(format!("eval-{}", case.case_id)),
        ChatTurn::user(case.message.clone()),
        history,
        DEFAULT_HISTORY_CAP,
    )
    .with_language(case.language);
    let mut payment = PaymentSessionState::default();
    let started = Instant::now();
    let outcome = run_pipeline(
        envelope,
        registry,
        TurnContext {
            account_id,
            payment: &mut payment,
            submit_ready: false,
        },
    );
    let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
    let kind = case.ground_truth.kind();
    match outcome {
        Ok(out) => {
            let prompt_tokens = out.calls.iter().map(|c| c.prompt_token_count).sum();
            let completion_tokens = out.calls.iter().map(|c| c.completion_token_count).sum();
            let verdict = judge(&case.ground_truth, &out);
            CaseResult {
                case_id: case.case_id.clone(),
                kind,
                correct: verdict.is_ok(),
                detail: verdict.err(),
                latency_ms,
                prompt_tokens,
                completion_tokens,
                cost: settings.prices.cost(prompt_tokens, completion_tokens),
            }
        }
        Err(e) => CaseResult {
            case_id: case.case_id.clone(),
            kind,
            correct: false,
            detail: Some(format!("input rejected: {e}")),
            latency_ms,
            prompt_tokens: 0,
            completion_tokens: 0,
            cost: 0.0,
        },
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot start eval workers: {0}")]
pub struct WorkerPoolError(#[from] rayon::ThreadPoolBuildError);

/// Runs cases on up to `settings.workers` threads; results keep suite order.
pub fn run_suite(
    cases: &[TestCase],
    registry: &AgentRegistry,
    account_id: &AccountId,
    settings: &EvalSection,
) -> Result<EvalReport, WorkerPoolError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.workers.max(1)).build()?;
    let results: Vec<CaseResult> =
        pool.install(|| cases.par_iter().map(|c| run_case(c, registry, account_id, settings)).collect());
    Ok(EvalReport::from_results(results, settings))
}
