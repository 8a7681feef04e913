//! Conversational banking pipeline: guardrails, intent routing, payment and
//! FAQ agents over a pluggable model backend, a simulated banking core with
//! human-in-the-loop confirmation, and an evaluation harness.

pub mod backend;
pub mod banking;
pub mod canonical;
pub mod clock;
pub mod config;
pub mod defaults;
pub mod envelope;
pub mod eval;
pub mod faq;
pub mod guardrails;
pub mod intent;
pub mod money;
pub mod payment;
pub mod pipeline;

pub use backend::{AdapterSpec, AgentName, ModelBackend, ModelCallRecord, ModelError};
pub use banking::{AccountId, Bank, BankError, Decision, PendingTransaction, TxId, TxState};
pub use clock::{Clock, SystemClock};
pub use config::AppConfig;
pub use envelope::{AttachmentRef, ChatTurn, Language, PipelineEnvelope, Role, SessionId, Stage, StageRecord};
pub use guardrails::{GuardrailVerdict, ViolationCategory};
pub use intent::{IntentCategory, IntentResult};
pub use money::Money;
pub use payment::{PaymentAgentResult, PaymentSessionState, TransferDraft};
pub use pipeline::{run_pipeline, AgentRegistry, PipelineOutcome, TurnContext};
