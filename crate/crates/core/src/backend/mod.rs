//! Inference boundary shared by all agents.
//!
//! Every agent talks to a [`ModelBackend`] through [`complete_structured`],
//! which renders the adapter's prompt, parses the reply into the agent's
//! strict output type and retries with a repair suffix on malformed text.

mod fixture;
mod http;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canonical::{SchemaId, StructuredOutput};
use crate::envelope::ChatTurn;

pub use fixture::{FixtureBackend, FixtureEntry, FixtureRule};
pub use http::{HttpBackendConfig, HttpChatBackend};
pub use scripted::{CountingBackend, ScriptedBackend};

/// Appended to the prompt when the previous attempt was not a valid object.
pub const REPAIR_SUFFIX: &str =
    "\n\nYour previous reply was not valid. Respond with only the required JSON object.";

pub const DEFAULT_RETRY_LIMIT: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentName {
    Guardrails,
    Intent,
    Payment,
    Faq,
}

impl AgentName {
    pub const ALL: [AgentName; 4] = [AgentName::Guardrails, AgentName::Intent, AgentName::Payment, AgentName::Faq];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentName::Guardrails => "guardrails",
            AgentName::Intent => "intent",
            AgentName::Payment => "payment",
            AgentName::Faq => "faq",
        }
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BackendKind {
    Fixture,
    HttpChatCompletion,
}

/// Per-agent specialization: adapter id, instruction template and output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdapterSpec {
    pub agent_name: AgentName,
    pub adapter_id: String,
    pub prompt_template: String,
    pub output_schema_id: String,
}

impl AdapterSpec {
    pub fn schema(&self) -> Option<SchemaId> {
        SchemaId::from_name(&self.output_schema_id)
    }

    pub fn placeholders(&self) -> Vec<String> {
        placeholders(&self.prompt_template)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelCallRecord {
    pub adapter_id: String,
    pub prompt_token_count: u64,
    pub completion_token_count: u64,
    pub latency_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterConfigError {
    #[error("cannot read adapter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("adapter file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("agent `{0}` has no adapter")]
    MissingAgent(AgentName),
    #[error("agent `{0}` has more than one adapter")]
    DuplicateAgent(AgentName),
    #[error("adapter `{adapter}` names unregistered schema `{schema}`")]
    UnknownSchema { adapter: String, schema: String },
}

/// Exactly one active adapter per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    specs: BTreeMap<AgentName, AdapterSpec>,
}

impl AdapterSet {
    pub fn new(specs: Vec<AdapterSpec>) -> Result<Self, AdapterConfigError> {
        let mut map = BTreeMap::new();
        for spec in specs {
            if spec.schema().is_none() {
                return Err(AdapterConfigError::UnknownSchema {
                    adapter: spec.adapter_id.clone(),
                    schema: spec.output_schema_id.clone(),
                });
            }
            let agent = spec.agent_name;
            if map.insert(agent, spec).is_some() {
                return Err(AdapterConfigError::DuplicateAgent(agent));
            }
        }
        for agent in AgentName::ALL {
            if !map.contains_key(&agent) {
                return Err(AdapterConfigError::MissingAgent(agent));
            }
        }
        Ok(AdapterSet { specs: map })
    }

    pub fn from_json(text: &str) -> Result<Self, AdapterConfigError> {
        AdapterSet::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, AdapterConfigError> {
        AdapterSet::from_json(&std::fs::read_to_string(path)?)
    }

    /// The shipped adapter configuration.
    pub fn builtin() -> Self {
        AdapterSet::from_json(crate::defaults::ADAPTERS_JSON).expect("built-in adapters are valid")
    }

    pub fn get(&self, agent: AgentName) -> &AdapterSpec {
        &self.specs[&agent]
    }

    pub fn replace(&mut self, spec: AdapterSpec) {
        self.specs.insert(spec.agent_name, spec);
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap());

pub fn placeholders(template: &str) -> Vec<String> {
    let mut names: Vec<String> = PLACEHOLDER
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .collect();
    names.dedup();
    names
}

/// Substitutes `{name}` placeholders in a single pass.
pub fn render_prompt(spec: &AdapterSpec, bindings: &BTreeMap<String, String>) -> Result<String, BackendError> {
    for name in placeholders(&spec.prompt_template) {
        if !bindings.contains_key(&name) {
            return Err(BackendError::MissingBinding(name));
        }
    }
    Ok(PLACEHOLDER
        .replace_all(&spec.prompt_template, |caps: &regex::Captures<'_>| bindings[&caps[1]].clone())
        .into_owned())
}

/// Counts tokens for cost accounting.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Whitespace-split approximation.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokens;

impl TokenCounter for WhitespaceTokens {
    fn count(&self, text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }
}

pub fn count_tokens(text: &str) -> u64 {
    WhitespaceTokens.count(text)
}

/// What a backend sees for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub agent: AgentName,
    pub adapter_id: String,
    pub schema: SchemaId,
    /// Rendered instruction prompt.
    pub prompt: String,
    pub history: Vec<ChatTurn>,
    /// The latest user content.
    pub message: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl BackendResponse {
    pub fn text(text: impl Into<String>) -> Self {
        BackendResponse {
            text: text.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("missing prompt binding `{0}`")]
    MissingBinding(String),
}

pub trait ModelBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("no valid {schema} after {attempts} attempts: {last_error}")]
    SchemaViolation {
        schema: &'static str,
        attempts: u32,
        last_error: String,
    },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("adapter `{0}` has an unregistered output schema")]
    UnregisteredSchema(String),
}

/// Runs one structured call with bounded repair retries.
///
/// Token counts accumulate over all attempts; the record's `attempt` is the
/// attempt that produced the returned value.
pub fn complete_structured<T: StructuredOutput>(
    backend: &dyn ModelBackend,
    spec: &AdapterSpec,
    prompt: &str,
    history: &[ChatTurn],
    message: &str,
    retry_limit: u32,
) -> Result<(T, ModelCallRecord), ModelError> {
    if spec.schema().is_none() {
        return Err(ModelError::UnregisteredSchema(spec.adapter_id.clone()));
    }
    let started = Instant::now();
    let history_tokens: u64 = history.iter().map(|t| count_tokens(&t.text)).sum();
    let mut prompt_tokens = 0u64;
    let mut completion_tokens = 0u64;
    let mut current_prompt = prompt.to_string();
    let mut last_error = String::new();

    for attempt in 1..=retry_limit + 1 {
        let request = BackendRequest {
            agent: spec.agent_name,
            adapter_id: spec.adapter_id.clone(),
            schema: T::SCHEMA,
            prompt: current_prompt.clone(),
            history: history.to_vec(),
            message: message.to_string(),
            attempt,
        };
        let response = backend
            .complete(&request)
            .map_err(|e| ModelError::BackendUnavailable(e.to_string()))?;
        prompt_tokens += response
            .prompt_tokens
            .unwrap_or_else(|| count_tokens(&current_prompt) + history_tokens + count_tokens(message));
        completion_tokens += response.completion_tokens.unwrap_or_else(|| count_tokens(&response.text));

        match parse_structured::<T>(&response.text) {
            Ok(value) => {
                let record = ModelCallRecord {
                    adapter_id: spec.adapter_id.clone(),
                    prompt_token_count: prompt_tokens,
                    completion_token_count: completion_tokens,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempt,
                };
                return Ok((value, record));
            }
            Err(e) => {
                tracing::debug!(agent = %spec.agent_name, attempt, error = %e, "malformed structured output");
                last_error = e;
                if !current_prompt.ends_with(REPAIR_SUFFIX) {
                    current_prompt.push_str(REPAIR_SUFFIX);
                }
            }
        }
    }
    Err(ModelError::SchemaViolation {
        schema: T::SCHEMA.name(),
        attempts: retry_limit + 1,
        last_error,
    })
}

/// Extracts, deserializes and validates one object from raw model text.
pub fn parse_structured<T: StructuredOutput>(text: &str) -> Result<T, String> {
    let candidate = extract_json_object(text).ok_or_else(|| "no JSON object in reply".to_string())?;
    let value: T = serde_json::from_str(candidate).map_err(|e| e.to_string())?;
    value.validate()?;
    Ok(value)
}

/// Finds the first balanced `{...}` in `text`, skipping code fences and prose.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if start.is_none() {
            if b == b'{' {
                start = Some(i);
                depth = 1;
            }
            continue;
        }
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start.unwrap()..=i]);
                }
            }
            _ => {}
        }
    }
    None
}
