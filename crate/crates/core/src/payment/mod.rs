//! Payment action agent: five-field transfer drafts, validation against the
//! bank directory, multi-transfer disambiguation and hand-off to the bank.

mod agent;
mod ocr;

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use crate::banking::TransferKind;
use crate::canonical::{SchemaId, StructuredOutput};
use crate::money::Money;

pub use agent::{
    confirmation_message, handle_payment_turn, submit_for_execution, PaymentContext, PaymentSessionState,
    PaymentTurn, PaymentValidator, SubmitError, AGENT_FAILURE_MESSAGE, IMAGE_TEXT_MARKER,
};
pub use ocr::{FixtureOcr, OcrEngine, OcrError, OCR_UNAVAILABLE_MESSAGE};

pub const DEFAULT_REFERENCE: &str = "Funds Transfer";

fn default_reference() -> String {
    DEFAULT_REFERENCE.to_string()
}

/// Null, missing or blank references all become the default.
fn reference_or_default<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    Ok(match raw {
        Some(r) if !r.trim().is_empty() => r.trim().to_string(),
        _ => default_reference(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferDraft {
    #[serde(default)]
    pub recipient_name: Option<String>,
    #[serde(default)]
    pub bank_name: Option<String>,
    #[serde(default)]
    pub account_number: Option<String>,
    #[serde(default)]
    pub amount: Option<Money>,
    #[serde(default = "default_reference", deserialize_with = "reference_or_default")]
    pub reference: String,
}

impl Default for TransferDraft {
    fn default() -> Self {
        TransferDraft {
            recipient_name: None,
            bank_name: None,
            account_number: None,
            amount: None,
            reference: default_reference(),
        }
    }
}

impl TransferDraft {
    pub fn missing_fields(&self) -> Vec<Field> {
        let mut out = Vec::new();
        if self.recipient_name.is_none() {
            out.push(Field::RecipientName);
        }
        if self.bank_name.is_none() {
            out.push(Field::BankName);
        }
        if self.account_number.is_none() {
            out.push(Field::AccountNumber);
        }
        if self.amount.is_none() {
            out.push(Field::Amount);
        }
        out
    }

    pub fn clear(&mut self, field: Field) {
        match field {
            Field::RecipientName => self.recipient_name = None,
            Field::BankName => self.bank_name = None,
            Field::AccountNumber => self.account_number = None,
            Field::Amount => self.amount = None,
            Field::Reference => self.reference = default_reference(),
        }
    }

    /// One-line summary shown before the user decides.
    pub fn summary(&self) -> String {
        let or_q = |v: &Option<String>| v.clone().unwrap_or_else(|| "?".into());
        format!(
            "{} to {} ({}, {}), reference \"{}\"",
            self.amount.map(|a| a.to_string()).unwrap_or_else(|| "?".into()),
            or_q(&self.recipient_name),
            or_q(&self.bank_name),
            or_q(&self.account_number),
            self.reference
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaymentAgentResult {
    pub transfers: Vec<TransferDraft>,
    pub message: String,
}

impl StructuredOutput for PaymentAgentResult {
    const SCHEMA: SchemaId = SchemaId::PaymentResult;

    fn validate(&self) -> Result<(), String> {
        if self.message.trim().is_empty() {
            return Err("message must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Field {
    RecipientName,
    BankName,
    AccountNumber,
    Amount,
    Reference,
}

impl Field {
    pub fn describe(self) -> &'static str {
        match self {
            Field::RecipientName => "recipient's name",
            Field::BankName => "bank name",
            Field::AccountNumber => "account number",
            Field::Amount => "amount",
            Field::Reference => "reference",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "state")]
pub enum CompletionState {
    Incomplete { missing: Vec<Field> },
    Invalid { errors: BTreeMap<Field, String> },
    AwaitingDisambiguation { count: usize },
    ReadyForConfirmation,
}

impl CompletionState {
    pub fn is_ready(&self) -> bool {
        matches!(self, CompletionState::ReadyForConfirmation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BankEntry {
    pub bank_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub routing_code: String,
}

/// Supported banks, matched case-insensitively by name or alias.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BankDirectory {
    entries: Vec<BankEntry>,
    lookup: BTreeMap<String, usize>,
}

fn bank_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl BankDirectory {
    pub fn new(entries: Vec<BankEntry>) -> Self {
        let mut lookup = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            lookup.insert(bank_key(&e.bank_name), i);
            for a in &e.aliases {
                lookup.entry(bank_key(a)).or_insert(i);
            }
        }
        BankDirectory { entries, lookup }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(BankDirectory::new(serde_json::from_str(text)?))
    }

    pub fn builtin() -> Self {
        BankDirectory::from_json(crate::defaults::BANKS_JSON).expect("built-in bank directory parses")
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn resolve(&self, name: &str) -> Option<&BankEntry> {
        self.lookup.get(&bank_key(name)).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve(name).is_some()
    }

    /// Names and aliases, one bank per line, for prompt rendering.
    pub fn prompt_listing(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                if e.aliases.is_empty() {
                    format!("- {}", e.bank_name)
                } else {
                    format!("- {} ({})", e.bank_name, e.aliases.join(", "))
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum IdentifierKind {
    BusinessId,
    Nric,
    Phone,
    Account,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentifierRule {
    pub kind: IdentifierKind,
    pub pattern: String,
}

/// Ordered identifier patterns; the first match decides the kind.
#[derive(Debug, Clone)]
pub struct IdentifierRules {
    rules: Vec<(IdentifierKind, Regex)>,
}

impl IdentifierRules {
    pub fn new(rules: Vec<IdentifierRule>) -> Result<Self, regex::Error> {
        let compiled = rules
            .into_iter()
            .map(|r| Ok((r.kind, Regex::new(&r.pattern)?)))
            .collect::<Result<Vec<_>, regex::Error>>()?;
        Ok(IdentifierRules { rules: compiled })
    }

    pub fn classify(&self, identifier: &str) -> Option<IdentifierKind> {
        let compact: String = identifier.chars().filter(|c| !c.is_whitespace()).collect();
        self.rules.iter().find(|(_, re)| re.is_match(&compact)).map(|(k, _)| *k)
    }

    /// Merchant identifiers are P2M; everything else is person to person.
    pub fn transfer_kind(&self, identifier: &str) -> TransferKind {
        match self.classify(identifier) {
            Some(IdentifierKind::BusinessId) => TransferKind::P2M,
            _ => TransferKind::P2P,
        }
    }
}

impl Default for IdentifierRules {
    fn default() -> Self {
        IdentifierRules::new(vec![
            IdentifierRule {
                kind: IdentifierKind::BusinessId,
                pattern: r"^(?:\d{6,7}-[A-Z]|[A-Z]{2,3}\d{6,12})$".into(),
            },
            IdentifierRule {
                kind: IdentifierKind::Nric,
                pattern: r"^\d{6}-\d{2}-\d{4}$".into(),
            },
            IdentifierRule {
                kind: IdentifierKind::Phone,
                pattern: r"^(?:\+?60|0)1\d-?\d{7,8}$".into(),
            },
            IdentifierRule {
                kind: IdentifierKind::Account,
                pattern: r"^\d{6,20}$".into(),
            },
        ])
        .expect("default identifier rules compile")
    }
}

pub const AMOUNT_ERROR: &str = "must be greater than zero";
pub const BANK_ERROR: &str = "bank name is not supported";
pub const IDENTIFIER_ERROR: &str = "not a recognised account number, phone number, ID or business ID";

/// Pure check of one draft. Invalid fields take precedence over missing ones.
pub fn validate_draft(draft: &TransferDraft, directory: &BankDirectory, rules: &IdentifierRules) -> CompletionState {
    let mut errors = BTreeMap::new();
    if let Some(a) = draft.amount {
        if !a.is_positive() {
            errors.insert(Field::Amount, AMOUNT_ERROR.to_string());
        }
    }
    if let Some(bank) = &draft.bank_name {
        if !directory.contains(bank) {
            errors.insert(Field::BankName, BANK_ERROR.to_string());
        }
    }
    if let Some(id) = &draft.account_number {
        if rules.classify(id).is_none() {
            errors.insert(Field::AccountNumber, IDENTIFIER_ERROR.to_string());
        }
    }
    if let Some(name) = &draft.recipient_name {
        if name.trim().is_empty() {
            errors.insert(Field::RecipientName, "must not be empty".to_string());
        }
    }
    if draft.reference.trim().is_empty() {
        errors.insert(Field::Reference, "must not be empty".to_string());
    }
    if !errors.is_empty() {
        return CompletionState::Invalid { errors };
    }
    let missing = draft.missing_fields();
    if !missing.is_empty() {
        return CompletionState::Incomplete { missing };
    }
    CompletionState::ReadyForConfirmation
}

/// Completion state of a whole agent result.
pub fn completion_state(result: &PaymentAgentResult, directory: &BankDirectory, rules: &IdentifierRules) -> CompletionState {
    match result.transfers.as_slice() {
        [] => CompletionState::Incomplete {
            missing: TransferDraft::default().missing_fields(),
        },
        [one] => validate_draft(one, directory, rules),
        many => CompletionState::AwaitingDisambiguation { count: many.len() },
    }
}

pub const MULTIPLE_TRANSFERS_MESSAGE: &str =
    "I can only process one transfer at a time. Which transfer would you like to process first?";

/// Asks which of several detected transfers to process. Single results pass
/// through unchanged.
pub fn resolve_multiple(result: PaymentAgentResult) -> PaymentAgentResult {
    if result.transfers.len() < 2 {
        return result;
    }
    let options = result
        .transfers
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}. {}", i + 1, d.summary()))
        .collect::<Vec<_>>()
        .join("\n");
    PaymentAgentResult {
        message: format!("{MULTIPLE_TRANSFERS_MESSAGE}\n{options}"),
        transfers: result.transfers,
    }
}

static ORDINALS: &[(&str, usize)] = &[
    ("first", 0),
    ("1st", 0),
    ("one", 0),
    ("second", 1),
    ("2nd", 1),
    ("two", 1),
    ("third", 2),
    ("3rd", 2),
    ("three", 2),
    ("fourth", 3),
    ("4th", 3),
    ("four", 3),
];

/// Picks one retained draft from a follow-up such as "the first one" or
/// "the one to Siti".
pub fn select_retained(retained: &[TransferDraft], follow_up: &str) -> Option<usize> {
    if retained.is_empty() {
        return None;
    }
    let lower = follow_up.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();

    let named: Vec<usize> = retained
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            d.recipient_name.as_deref().is_some_and(|n| {
                let n = n.to_lowercase();
                let parts: Vec<&str> = n.split_whitespace().collect();
                !parts.is_empty() && parts.iter().all(|p| words.contains(p))
            })
        })
        .map(|(i, _)| i)
        .collect();
    if named.len() == 1 {
        return Some(named[0]);
    }
    if words.contains(&"last") {
        return Some(retained.len() - 1);
    }
    // a bare digit is an option number only when it is small
    for w in &words {
        if let Ok(n) = w.parse::<usize>() {
            if (1..=retained.len()).contains(&n) {
                return Some(n - 1);
            }
        }
    }
    words
        .iter()
        .find_map(|w| ORDINALS.iter().find(|(o, i)| o == w && *i < retained.len()))
        .map(|(_, i)| *i)
}

fn same_name(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Combines the session draft with a freshly extracted one.
///
/// Extracted values win where present; missing values never erase what the
/// session already holds. A different recipient starts a new draft.
pub fn merge_drafts(previous: Option<&TransferDraft>, extracted: &TransferDraft) -> TransferDraft {
    let Some(prev) = previous else {
        return extracted.clone();
    };
    if let (Some(a), Some(b)) = (&prev.recipient_name, &extracted.recipient_name) {
        if !same_name(a, b) {
            return extracted.clone();
        }
    }
    TransferDraft {
        recipient_name: extracted.recipient_name.clone().or_else(|| prev.recipient_name.clone()),
        bank_name: extracted.bank_name.clone().or_else(|| prev.bank_name.clone()),
        account_number: extracted.account_number.clone().or_else(|| prev.account_number.clone()),
        amount: extracted.amount.or(prev.amount),
        reference: if extracted.reference == DEFAULT_REFERENCE {
            prev.reference.clone()
        } else {
            extracted.reference.clone()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> TransferDraft {
        TransferDraft {
            recipient_name: Some("John".into()),
            bank_name: Some("Bank ABC".into()),
            account_number: Some("5512345678".into()),
            amount: Some(Money::from_sen(100_000)),
            reference: DEFAULT_REFERENCE.into(),
        }
    }

    #[test]
    fn reference_defaults() {
        let d: TransferDraft = serde_json::from_str(r#"{"recipientName":"A","reference":null}"#).unwrap();
        assert_eq!(d.reference, "Funds Transfer");
        let d: TransferDraft = serde_json::from_str(r#"{"recipientName":"A"}"#).unwrap();
        assert_eq!(d.reference, "Funds Transfer");
        let d: TransferDraft = serde_json::from_str(r#"{"reference":"  "}"#).unwrap();
        assert_eq!(d.reference, "Funds Transfer");
    }

    #[test]
    fn validate_examples() {
        let dir = BankDirectory::builtin();
        let rules = IdentifierRules::default();
        assert_eq!(validate_draft(&full(), &dir, &rules), CompletionState::ReadyForConfirmation);

        let mut d = full();
        d.amount = Some(Money::ZERO);
        d.bank_name = Some("Bank XYZ".into());
        let CompletionState::Invalid { errors } = validate_draft(&d, &dir, &rules) else {
            panic!("expected invalid");
        };
        assert_eq!(errors.get(&Field::Amount).map(String::as_str), Some("must be greater than zero"));
        assert!(errors.contains_key(&Field::BankName));

        let mut d = full();
        d.amount = None;
        assert_eq!(
            validate_draft(&d, &dir, &rules),
            CompletionState::Incomplete { missing: vec![Field::Amount] }
        );
    }

    #[test]
    fn validate_is_idempotent() {
        let dir = BankDirectory::builtin();
        let rules = IdentifierRules::default();
        let d = TransferDraft::default();
        assert_eq!(validate_draft(&d, &dir, &rules), validate_draft(&d, &dir, &rules));
    }

    #[test]
    fn directory_aliases() {
        let dir = BankDirectory::builtin();
        assert_eq!(dir.resolve("maybank").unwrap().bank_name, "Malayan Banking Berhad");
        assert_eq!(dir.resolve("bank  abc").unwrap().bank_name, "Bank ABC");
        assert!(!dir.contains("Bank XYZ"));
    }

    #[test]
    fn identifier_kinds() {
        let r = IdentifierRules::default();
        assert_eq!(r.classify("5512345678"), Some(IdentifierKind::Account));
        assert_eq!(r.classify("012-3456789"), Some(IdentifierKind::Phone));
        assert_eq!(r.classify("+60123456789"), Some(IdentifierKind::Phone));
        assert_eq!(r.classify("900101-14-5678"), Some(IdentifierKind::Nric));
        assert_eq!(r.classify("202301012345"), Some(IdentifierKind::Account));
        assert_eq!(r.classify("1234567-X"), Some(IdentifierKind::BusinessId));
        assert_eq!(r.classify("abc"), None);
        assert_eq!(r.transfer_kind("1234567-X"), TransferKind::P2M);
        assert_eq!(r.transfer_kind("5512345678"), TransferKind::P2P);
    }

    #[test]
    fn multiple_transfers() {
        let mk = |name: &str, sen| TransferDraft {
            recipient_name: Some(name.into()),
            amount: Some(Money::from_sen(sen)),
            ..TransferDraft::default()
        };
        let drafts = vec![mk("Ali", 5_000), mk("Siti", 6_000)];
        let result = resolve_multiple(PaymentAgentResult { transfers: drafts.clone(), message: "x".into() });
        assert!(result.message.starts_with(MULTIPLE_TRANSFERS_MESSAGE));
        assert_eq!(result.transfers.len(), 2);
        let dir = BankDirectory::builtin();
        assert_eq!(
            completion_state(&result, &dir, &IdentifierRules::default()),
            CompletionState::AwaitingDisambiguation { count: 2 }
        );
        assert_eq!(select_retained(&drafts, "the first one"), Some(0));
        assert_eq!(select_retained(&drafts, "Siti please"), Some(1));
        assert_eq!(select_retained(&drafts, "2"), Some(1));
        assert_eq!(select_retained(&drafts, "last"), Some(1));
        assert_eq!(select_retained(&drafts, "hmm"), None);

        let single = PaymentAgentResult { transfers: vec![mk("Ali", 1)], message: "ok".into() };
        assert_eq!(resolve_multiple(single.clone()), single);
    }

    #[test]
    fn merge_keeps_known_fields() {
        let prev = TransferDraft {
            recipient_name: Some("Jane".into()),
            reference: "Lunch".into(),
            ..TransferDraft::default()
        };
        let next = TransferDraft {
            bank_name: Some("Bank ABC".into()),
            account_number: Some("7712345678".into()),
            ..TransferDraft::default()
        };
        let merged = merge_drafts(Some(&prev), &next);
        assert_eq!(merged.recipient_name.as_deref(), Some("Jane"));
        assert_eq!(merged.reference, "Lunch");
        assert_eq!(merged.bank_name.as_deref(), Some("Bank ABC"));

        let other = TransferDraft {
            recipient_name: Some("Ali".into()),
            ..TransferDraft::default()
        };
        assert_eq!(merge_drafts(Some(&merged), &other), other);
    }
}
