//! Canonical JSON for structured agent outputs.
//!
//! The canonical form is UTF-8 JSON with object keys sorted, no
//! insignificant whitespace, and currency fields rendered with exactly two
//! fractional digits. Equal values always produce identical bytes, which is
//! what the audit digests rely on.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::money::Money;

/// Names under which structured output types are registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaId {
    GuardrailVerdict,
    IntentResult,
    PaymentResult,
    FaqAnswer,
    ReformulatedQuery,
    ActionOutput,
    ConfirmationOutcome,
}

impl SchemaId {
    pub const ALL: [SchemaId; 7] = [
        SchemaId::GuardrailVerdict,
        SchemaId::IntentResult,
        SchemaId::PaymentResult,
        SchemaId::FaqAnswer,
        SchemaId::ReformulatedQuery,
        SchemaId::ActionOutput,
        SchemaId::ConfirmationOutcome,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemaId::GuardrailVerdict => "guardrail_verdict",
            SchemaId::IntentResult => "intent_result",
            SchemaId::PaymentResult => "payment_result",
            SchemaId::FaqAnswer => "faq_answer",
            SchemaId::ReformulatedQuery => "reformulated_query",
            SchemaId::ActionOutput => "action_output",
            SchemaId::ConfirmationOutcome => "confirmation_outcome",
        }
    }

    pub fn from_name(name: &str) -> Option<SchemaId> {
        SchemaId::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Object keys whose numeric values are currency amounts.
    pub fn currency_keys(self) -> &'static [&'static str] {
        match self {
            SchemaId::PaymentResult | SchemaId::ActionOutput | SchemaId::ConfirmationOutcome => {
                &["amount", "availableBalance", "balance", "totalSpend"]
            }
            _ => &[],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("unknown output type `{0}`")]
    UnknownType(String),
    #[error("value does not serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// A strict structured output produced by an agent.
pub trait StructuredOutput: Serialize + DeserializeOwned + Clone + PartialEq {
    const SCHEMA: SchemaId;

    /// Checks the type's invariants beyond what deserialization enforces.
    fn validate(&self) -> Result<(), String>;
}

/// Canonical bytes of a typed output.
pub fn canonical_serialize<T: StructuredOutput>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let json = serde_json::to_value(value)?;
    Ok(write_canonical(&json, T::SCHEMA.currency_keys()).into_bytes())
}

/// Canonical bytes of an untyped value registered under `schema_name`.
pub fn canonical_serialize_value(schema_name: &str, value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let schema = SchemaId::from_name(schema_name)
        .ok_or_else(|| CanonicalError::UnknownType(schema_name.to_string()))?;
    Ok(write_canonical(value, schema.currency_keys()).into_bytes())
}

pub fn canonical_string<T: StructuredOutput>(value: &T) -> String {
    // Serialization of our own derive types cannot fail.
    let json = serde_json::to_value(value).expect("structured output serializes");
    write_canonical(&json, T::SCHEMA.currency_keys())
}

pub fn parse_canonical<T: StructuredOutput>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

fn write_canonical(value: &Value, currency_keys: &[&str]) -> String {
    let mut out = String::new();
    write_value(&mut out, value, currency_keys, false);
    out
}

fn write_value(out: &mut String, value: &Value, currency_keys: &[&str], is_currency: bool) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if is_currency {
                if let Some(m) = n.as_f64().and_then(Money::from_major_f64) {
                    out.push_str(&m.decimal_string());
                    return;
                }
            }
            let _ = write!(out, "{n}");
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item, currency_keys, is_currency);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push(':');
                let currency = currency_keys.contains(&key.as_str());
                write_value(out, &map[key], currency_keys, currency);
            }
            out.push('}');
        }
    }
}
