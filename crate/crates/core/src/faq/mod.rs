//! FAQ action agent: query reformulation, retrieval, reranking and a
//! grounded answer with a fallback when nothing relevant is found.

mod embed;
mod rerank;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{complete_structured, render_prompt, AdapterSpec, ModelBackend, ModelCallRecord, ModelError};
use crate::canonical::{SchemaId, StructuredOutput};
use crate::envelope::ChatTurn;

pub use embed::{cosine, words, EmbedError, Embedder, HashedNgramEmbedder, DEFAULT_DIM};
pub use rerank::{content_terms, lexical_overlap, rerank, BlendScorer, RelevanceScorer, DEFAULT_ALPHA};
pub use store::{hit_order, parse_jsonl, KnowledgeDoc, KnowledgeStore, RetrievalHit, StoreError, StoreSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaqAnswer {
    pub message: String,
}

impl StructuredOutput for FaqAnswer {
    const SCHEMA: SchemaId = SchemaId::FaqAnswer;

    fn validate(&self) -> Result<(), String> {
        if self.message.trim().is_empty() {
            return Err("message must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReformulatedQuery {
    pub query: String,
}

impl StructuredOutput for ReformulatedQuery {
    const SCHEMA: SchemaId = SchemaId::ReformulatedQuery;

    fn validate(&self) -> Result<(), String> {
        if self.query.trim().is_empty() {
            return Err("query must not be empty".into());
        }
        Ok(())
    }
}

pub const REFORMULATION_TEMPLATE: &str = "You rewrite a customer's latest banking question so it can be understood without the earlier conversation.\n\
Replace pronouns and omitted subjects with what they refer to in the conversation. If the question already stands on its own, return it unchanged.\n\n\
Reply with JSON only: {\"query\": \"<rewritten question>\"}";

/// Line that opens the documents block in the answer prompt.
pub const KNOWLEDGE_HEADER: &str = "Knowledge base:";
/// Text that follows the documents block in the answer prompt.
pub const KNOWLEDGE_FOOTER: &str = "\n\nReply with JSON only";

pub const FALLBACK_MESSAGE: &str = "I'm sorry, I couldn't find information on that. Please check the app or contact our Help & Support Center for further assistance.";
pub const OUT_OF_DOMAIN_MESSAGE: &str = "Sorry, that's outside my expertise as a banking assistant. Is there anything about your account, transfers or our banking services I can help with?";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct FaqConfig {
    pub k: usize,
    pub top_n: usize,
    pub alpha: f64,
    pub threshold: f64,
}

impl Default for FaqConfig {
    fn default() -> Self {
        FaqConfig {
            k: 8,
            top_n: 3,
            alpha: DEFAULT_ALPHA,
            threshold: 0.15,
        }
    }
}

const BANKING_TERMS: &[&str] = &[
    "2fa", "account", "accounts", "acc", "app", "atm", "balance", "bank", "banking", "bill", "bills", "branch",
    "card", "cards", "charge", "charges", "credit", "debit", "deposit", "duitnow", "ekyc", "favorite",
    "favourite", "fee", "fees", "fixed", "fraud", "fund", "funds", "insurance", "interest", "limit", "limits",
    "loan", "loans", "login", "money", "mykad", "otp", "password", "pay", "payment", "payments", "pin", "profit",
    "qr", "rate", "rates", "ringgit", "save", "saving", "savings", "scam", "security", "statement", "statements", "support",
    "transaction", "transactions", "transfer", "transferee", "transferees", "transfers", "withdraw",
    "withdrawal",
];

/// Whether the question touches banking at all.
pub fn is_banking_query(text: &str) -> bool {
    words(text).iter().any(|w| BANKING_TERMS.contains(&w.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FaqFallback {
    LowConfidence,
    OutOfDomain,
    AgentFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaqTurn {
    pub answer: FaqAnswer,
    /// The query actually used for retrieval.
    pub query: String,
    pub hits: Vec<RetrievalHit>,
    /// Documents placed in the answer prompt, best first.
    pub context_doc_ids: Vec<String>,
    pub reformulation_call: Option<ModelCallRecord>,
    pub answer_call: Option<ModelCallRecord>,
    pub fallback: Option<FaqFallback>,
    pub failure: Option<ModelError>,
}

pub struct FaqContext<'a> {
    pub backend: &'a dyn ModelBackend,
    pub spec: &'a AdapterSpec,
    pub store: &'a KnowledgeStore,
    pub config: FaqConfig,
    pub retry_limit: u32,
}

fn normalize_query(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Adapter used for the rewrite call: same adapter id, dedicated template.
pub fn reformulation_spec(faq: &AdapterSpec) -> AdapterSpec {
    AdapterSpec {
        agent_name: faq.agent_name,
        adapter_id: faq.adapter_id.clone(),
        prompt_template: REFORMULATION_TEMPLATE.to_string(),
        output_schema_id: SchemaId::ReformulatedQuery.name().to_string(),
    }
}

/// Rewrites a follow-up into a standalone query. Without history the input
/// is returned normalized and no call is made; on failure the raw input is used.
pub fn reformulate_query(
    ctx: &FaqContext<'_>,
    turn: &ChatTurn,
    history: &[ChatTurn],
) -> (String, Option<ModelCallRecord>, Option<ModelError>) {
    let raw = normalize_query(&turn.text);
    if history.is_empty() {
        return (raw, None, None);
    }
    let spec = reformulation_spec(ctx.spec);
    match complete_structured::<ReformulatedQuery>(ctx.backend, &spec, REFORMULATION_TEMPLATE, history, &raw, ctx.retry_limit) {
        Ok((q, call)) => (normalize_query(&q.query), Some(call), None),
        Err(e) => (raw, None, Some(e)),
    }
}

/// Formats documents for the `knowledge_context` placeholder.
pub fn knowledge_context(docs: &[&KnowledgeDoc]) -> String {
    docs.iter()
        .map(|d| format!("[{}] {}\n{}", d.doc_id, d.title, d.body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn answer(
    ctx: &FaqContext<'_>,
    query: &str,
    docs: &[&KnowledgeDoc],
    history: &[ChatTurn],
) -> Result<(FaqAnswer, ModelCallRecord), ModelError> {
    let bindings = BTreeMap::from([("knowledge_context".to_string(), knowledge_context(docs))]);
    let prompt = render_prompt(ctx.spec, &bindings).map_err(|e| ModelError::BackendUnavailable(e.to_string()))?;
    complete_structured::<FaqAnswer>(ctx.backend, ctx.spec, &prompt, history, query, ctx.retry_limit)
}

/// Full FAQ chain for one turn.
pub fn handle_faq_turn(ctx: &FaqContext<'_>, turn: &ChatTurn, history: &[ChatTurn]) -> FaqTurn {
    let (query, reformulation_call, reform_failure) = reformulate_query(ctx, turn, history);
    let mut out = FaqTurn {
        answer: FaqAnswer {
            message: FALLBACK_MESSAGE.to_string(),
        },
        query: query.clone(),
        hits: Vec::new(),
        context_doc_ids: Vec::new(),
        reformulation_call,
        answer_call: None,
        fallback: None,
        failure: reform_failure,
    };
    if !is_banking_query(&query) {
        out.answer.message = OUT_OF_DOMAIN_MESSAGE.to_string();
        out.fallback = Some(FaqFallback::OutOfDomain);
        return out;
    }
    let (snapshot, hits) = match ctx.store.retrieve_text(&query, ctx.config.k) {
        Ok(v) => v,
        Err(_) => {
            out.fallback = Some(FaqFallback::LowConfidence);
            return out;
        }
    };
    let scorer = BlendScorer { alpha: ctx.config.alpha };
    let ranked = rerank(&query, hits, snapshot.docs(), &scorer);
    out.hits = ranked.clone();
    let confident = ranked.first().is_some_and(|h| h.rerank_score >= ctx.config.threshold);
    if !confident {
        out.fallback = Some(FaqFallback::LowConfidence);
        return out;
    }
    let top: Vec<&KnowledgeDoc> = ranked
        .iter()
        .take(ctx.config.top_n)
        .filter_map(|h| snapshot.doc(&h.doc_id))
        .collect();
    out.context_doc_ids = top.iter().map(|d| d.doc_id.clone()).collect();
    match answer(ctx, &query, &top, history) {
        Ok((a, call)) => {
            out.answer = a;
            out.answer_call = Some(call);
        }
        Err(e) => {
            out.fallback = Some(FaqFallback::AgentFailure);
            out.failure = Some(e);
        }
    }
    out
}
