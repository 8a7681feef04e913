//! Deterministic offline backend.
//!
//! Lookup order: exact table keyed by a digest of (agent, normalized input),
//! then user regex rules in order, then the built-in per-schema engines.

mod faq;
mod guard;
mod intent;
mod payment;

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{AgentName, BackendError, BackendKind, BackendRequest, BackendResponse, ModelBackend};
use crate::canonical::SchemaId;

/// One exact-match fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixtureEntry {
    pub agent: AgentName,
    pub input: String,
    /// Restricts the entry to one output schema when an agent uses several.
    #[serde(default)]
    pub schema: Option<String>,
    pub output: Value,
}

/// Regex over the latest user content producing a fixed output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixtureRule {
    pub agent: AgentName,
    pub pattern: String,
    #[serde(default)]
    pub schema: Option<String>,
    pub output: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    #[serde(default)]
    pub entries: Vec<FixtureEntry>,
    #[serde(default)]
    pub rules: Vec<FixtureRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("invalid fixture file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid rule pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct CompiledRule {
    agent: AgentName,
    pattern: Regex,
    schema: Option<String>,
    output: String,
}

#[derive(Default)]
pub struct FixtureBackend {
    table: HashMap<String, Vec<(Option<String>, String)>>,
    rules: Vec<CompiledRule>,
}

impl std::fmt::Debug for FixtureBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FixtureBackend")
            .field("entries", &self.table.len())
            .field("rules", &self.rules.len())
            .finish()
    }
}

pub fn normalize_input(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Table key for an (agent, input) pair.
pub fn fixture_key(agent: AgentName, input: &str) -> String {
    let mut h = Sha256::new();
    h.update(agent.as_str().as_bytes());
    h.update([0u8]);
    h.update(normalize_input(input).as_bytes());
    hex::encode(h.finalize())
}

fn schema_matches(filter: &Option<String>, schema: SchemaId) -> bool {
    filter.as_deref().is_none_or(|s| s == schema.name())
}

impl FixtureBackend {
    /// Built-in engines only.
    pub fn builtin() -> Self {
        FixtureBackend::default()
    }

    pub fn from_file(file: FixtureFile) -> Result<Self, FixtureError> {
        let mut b = FixtureBackend::default();
        for e in file.entries {
            b.add_entry(e);
        }
        for r in file.rules {
            b.add_rule(r)?;
        }
        Ok(b)
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        FixtureBackend::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        FixtureBackend::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn add_entry(&mut self, entry: FixtureEntry) {
        self.table
            .entry(fixture_key(entry.agent, &entry.input))
            .or_default()
            .push((entry.schema, entry.output.to_string()));
    }

    pub fn add_rule(&mut self, rule: FixtureRule) -> Result<(), FixtureError> {
        self.rules.push(CompiledRule {
            agent: rule.agent,
            pattern: Regex::new(&rule.pattern)?,
            schema: rule.schema,
            output: rule.output.to_string(),
        });
        Ok(())
    }

    fn lookup(&self, request: &BackendRequest) -> Option<String> {
        if let Some(outs) = self.table.get(&fixture_key(request.agent, &request.message)) {
            if let Some((_, out)) = outs.iter().find(|(s, _)| schema_matches(s, request.schema)) {
                return Some(out.clone());
            }
        }
        self.rules
            .iter()
            .find(|r| r.agent == request.agent && schema_matches(&r.schema, request.schema) && r.pattern.is_match(&request.message))
            .map(|r| r.output.clone())
    }
}

impl ModelBackend for FixtureBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Fixture
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        if let Some(out) = self.lookup(request) {
            return Ok(BackendResponse::text(out));
        }
        let value = match request.schema {
            SchemaId::GuardrailVerdict => serde_json::to_value(guard::classify(&request.message)),
            SchemaId::IntentResult => serde_json::to_value(intent::classify(&request.message, &request.history)),
            SchemaId::PaymentResult => serde_json::to_value(payment::extract(request)),
            SchemaId::FaqAnswer => serde_json::to_value(faq::answer(&request.prompt, &request.message)),
            SchemaId::ReformulatedQuery => serde_json::to_value(faq::reformulate(&request.message, &request.history)),
            SchemaId::ActionOutput | SchemaId::ConfirmationOutcome => {
                return Err(BackendError::Unavailable(format!("no fixture engine for {}", request.schema.name())))
            }
        };
        let value = value.map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(BackendResponse::text(value.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{complete_structured, AdapterSet};
    use crate::guardrails::{GuardrailVerdict, ViolationCategory};
    use serde_json::json;

    #[test]
    fn table_beats_rules_beats_engine() {
        let file = FixtureFile {
            entries: vec![FixtureEntry {
                agent: AgentName::Guardrails,
                input: "Hello   THERE".into(),
                schema: None,
                output: json!({"isSafe": false, "guardrailViolation": "Hate", "message": "no"}),
            }],
            rules: vec![FixtureRule {
                agent: AgentName::Guardrails,
                pattern: "(?i)hello".into(),
                schema: None,
                output: json!({"isSafe": false, "guardrailViolation": "Privacy", "message": "no"}),
            }],
        };
        let b = FixtureBackend::from_file(file).unwrap();
        let adapters = AdapterSet::builtin();
        let spec = adapters.get(AgentName::Guardrails);
        let run = |text: &str| {
            complete_structured::<GuardrailVerdict>(&b, spec, "p", &[], text, 0).unwrap().0.guardrail_violation
        };
        assert_eq!(run("hello there"), Some(ViolationCategory::Hate));
        assert_eq!(run("hello world"), Some(ViolationCategory::Privacy));
        assert_eq!(run("good day"), None);
    }

    #[test]
    fn key_is_normalized_and_agent_scoped() {
        assert_eq!(fixture_key(AgentName::Intent, " A  b"), fixture_key(AgentName::Intent, "a b"));
        assert_ne!(fixture_key(AgentName::Intent, "a"), fixture_key(AgentName::Faq, "a"));
    }
}
