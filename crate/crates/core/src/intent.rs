//! Second pipeline stage: intent classification and dispatch.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{complete_structured, render_prompt, AdapterSpec, ModelBackend, ModelCallRecord, ModelError};
use crate::canonical::{SchemaId, StructuredOutput};
use crate::envelope::ChatTurn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentCategory {
    Payment,
    HistoryInquiry,
    AccountInquiry,
    Insight,
    Faq,
    Chat,
}

impl IntentCategory {
    pub const ALL: [IntentCategory; 6] = [
        IntentCategory::Payment,
        IntentCategory::HistoryInquiry,
        IntentCategory::AccountInquiry,
        IntentCategory::Insight,
        IntentCategory::Faq,
        IntentCategory::Chat,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntentCategory::Payment => "PAYMENT",
            IntentCategory::HistoryInquiry => "HISTORY_INQUIRY",
            IntentCategory::AccountInquiry => "ACCOUNT_INQUIRY",
            IntentCategory::Insight => "INSIGHT",
            IntentCategory::Faq => "FAQ",
            IntentCategory::Chat => "CHAT",
        }
    }
}

impl fmt::Display for IntentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntentCategory {
    type Err = RouteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntentCategory::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| RouteError::UnroutableIntent(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntentResult {
    pub intent: IntentCategory,
    pub clarification_needed: bool,
    pub message: Option<String>,
}

impl IntentResult {
    pub fn routed(intent: IntentCategory) -> Self {
        IntentResult {
            intent,
            clarification_needed: false,
            message: None,
        }
    }

    pub fn clarify(intent: IntentCategory, message: impl Into<String>) -> Self {
        IntentResult {
            intent,
            clarification_needed: true,
            message: Some(message.into()),
        }
    }
}

impl StructuredOutput for IntentResult {
    const SCHEMA: SchemaId = SchemaId::IntentResult;

    fn validate(&self) -> Result<(), String> {
        match (self.clarification_needed, self.message.as_deref()) {
            (true, None) => Err("clarification requires a message".into()),
            (true, Some(m)) if m.trim().is_empty() => Err("clarification requires a message".into()),
            (false, Some(_)) => Err("message must be null without clarification".into()),
            _ => Ok(()),
        }
    }
}

pub const REPHRASE_MESSAGE: &str = "Could you rephrase that?";

#[derive(Debug, Clone, PartialEq)]
pub struct IntentOutcome {
    pub result: IntentResult,
    pub call: Option<ModelCallRecord>,
    /// Set when the classifier failed and the clarification fallback was used.
    pub failure: Option<ModelError>,
}

pub fn classify_intent(
    turn: &ChatTurn,
    history: &[ChatTurn],
    backend: &dyn ModelBackend,
    spec: &AdapterSpec,
    retry_limit: u32,
) -> IntentOutcome {
    let attempt = render_prompt(spec, &BTreeMap::new())
        .map_err(|e| ModelError::BackendUnavailable(e.to_string()))
        .and_then(|prompt| {
            complete_structured::<IntentResult>(backend, spec, &prompt, history, &turn.text, retry_limit)
        });
    match attempt {
        Ok((result, call)) => IntentOutcome {
            result,
            call: Some(call),
            failure: None,
        },
        Err(e) => IntentOutcome {
            result: IntentResult::clarify(IntentCategory::Chat, REPHRASE_MESSAGE),
            call: None,
            failure: Some(e),
        },
    }
}

/// Downstream handler an intent resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionAgentRef {
    PaymentAgent,
    FaqAgent,
    HistoryQuery,
    AccountQuery,
    InsightQuery,
    SmallTalk,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("no handler for intent `{0}`")]
    UnroutableIntent(String),
    #[error("clarification pending; nothing to dispatch")]
    ClarificationPending,
    #[error("intent {0} has no registered handler")]
    MissingHandler(IntentCategory),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentRoutes {
    routes: BTreeMap<IntentCategory, ActionAgentRef>,
}

impl Default for IntentRoutes {
    fn default() -> Self {
        IntentRoutes::new([
            (IntentCategory::Payment, ActionAgentRef::PaymentAgent),
            (IntentCategory::Faq, ActionAgentRef::FaqAgent),
            (IntentCategory::HistoryInquiry, ActionAgentRef::HistoryQuery),
            (IntentCategory::AccountInquiry, ActionAgentRef::AccountQuery),
            (IntentCategory::Insight, ActionAgentRef::InsightQuery),
            (IntentCategory::Chat, ActionAgentRef::SmallTalk),
        ])
    }
}

impl IntentRoutes {
    pub fn new(routes: impl IntoIterator<Item = (IntentCategory, ActionAgentRef)>) -> Self {
        IntentRoutes {
            routes: routes.into_iter().collect(),
        }
    }

    /// Startup check that every intent has a handler.
    pub fn ensure_total(&self) -> Result<(), RouteError> {
        match IntentCategory::ALL.into_iter().find(|c| !self.routes.contains_key(c)) {
            Some(missing) => Err(RouteError::MissingHandler(missing)),
            None => Ok(()),
        }
    }

    pub fn dispatch(&self, result: &IntentResult) -> Result<ActionAgentRef, RouteError> {
        if result.clarification_needed {
            return Err(RouteError::ClarificationPending);
        }
        self.routes
            .get(&result.intent)
            .copied()
            .ok_or_else(|| RouteError::UnroutableIntent(result.intent.label().to_string()))
    }

    /// Dispatches a raw label, e.g. one read from an external fixture.
    pub fn dispatch_label(&self, label: &str) -> Result<ActionAgentRef, RouteError> {
        let intent: IntentCategory = label.parse()?;
        self.dispatch(&IntentResult::routed(intent))
    }
}
