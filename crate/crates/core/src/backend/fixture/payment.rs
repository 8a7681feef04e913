//! Rule-based transfer extraction over the whole conversation.
//!
//! User turns are replayed oldest first into a running draft, so the result
//! depends only on the request, like a stateless model call.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::backend::BackendRequest;
use crate::envelope::Role;
use crate::money::Money;
use crate::payment::{select_retained, PaymentAgentResult, TransferDraft, DEFAULT_REFERENCE, MULTIPLE_TRANSFERS_MESSAGE};

struct Bank {
    name: String,
    names: Vec<String>,
}

/// Reads the `- Name (Alias, Alias)` lines under "Supported Banks:".
fn bank_list(prompt: &str) -> Vec<Bank> {
    let Some(start) = prompt.find("Supported Banks:") else {
        return Vec::new();
    };
    prompt[start..]
        .lines()
        .skip(1)
        .take_while(|l| l.trim_start().starts_with("- "))
        .map(|l| {
            let l = l.trim_start().trim_start_matches("- ").trim();
            let (name, aliases) = match l.split_once(" (") {
                Some((n, rest)) => (n.trim(), rest.trim_end_matches(')')),
                None => (l, ""),
            };
            let mut names: Vec<String> = std::iter::once(name.to_string())
                .chain(aliases.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()))
                .collect();
            names.sort_by_key(|n| std::cmp::Reverse(n.len()));
            Bank {
                name: name.to_string(),
                names,
            }
        })
        .collect()
}

static RM_AMOUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bRM\s?(\d{1,3}(?:,\d{3})+|\d+)(\.\d{1,2})?\b|\b(\d+(?:\.\d{1,2})?)\s*(?:ringgit)\b").unwrap());
static VERB_AMOUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:transfer|send|pay|tsfr|trf|tf|xfer)\s+(\d{1,5}(?:\.\d{1,2})?)\b").unwrap()
});
static BARE_AMOUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(?:RM\s?)?(\d{1,3}(?:,\d{3})+|\d{1,5})(\.\d{1,2})?\s*[.!]?\s*$").unwrap());
static PAIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:\b[Rr][Mm]\s?|\b)(\d[\d,]*(?:\.\d{1,2})?)\s+to\s+([A-Z][a-zA-Z]+)").unwrap());
static RECIPIENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\b[Tt]o|\b[Pp]ay|\b[Ss]end|\b[Kk]epada)\s+([A-Z][a-zA-Z]*(?:\s+[A-Z][a-zA-Z]*)*)").unwrap()
});
static UNKNOWN_BANK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(Bank\s+[A-Z][A-Za-z]*|[A-Z][A-Za-z]+\s+Bank)\b").unwrap());
static IDENTIFIERS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"\b\d{6}-\d{2}-\d{4}\b",
        r"(?:\+?60|\b0)1\d-?\d{7,8}\b",
        r"\b\d{6,7}-[A-Z]\b",
        r"\b[A-Z]{2,3}\d{6,12}\b",
        r"\b\d{6,20}\b",
    ]
    .iter()
    .map(|p| Regex::new(p).unwrap())
    .collect()
});
static REFERENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:[Ff]or|[Uu]ntuk|[Rr]ef(?:erence)?:?)\s+([a-z]+(?:\s+[a-z]+){0,3})").unwrap());
static KEY_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^\s*(recipient(?: name)?|beneficiary|to|bank(?: name)?|account(?: no\.?| number)?|phone(?: number)?|amount|reference|ref|payment details)\s*:\s*(.+?)\s*$").unwrap()
});
static SPEAKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*(?:\[[^\]]*\]\s*)?([A-Z][a-z]+(?: [A-Z][a-z]+)*):\s+(.*)$").unwrap());
static ASKS_TO_BE_PAID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(my (\w+ )?(account|acc)|pay me|transfer (to )?me|send (to )?me|bank in)\b").unwrap());
static TRANSFER_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(transfer|send|pay|tsfr|trf|tf|xfer|remit|duitnow)\b").unwrap());
static DONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(successful(ly)?|has been (sent|transferred|submitted|completed|cancell?ed|declined)|was (declined|cancell?ed))\b").unwrap()
});

const NOT_NAMES: &[&str] = &["Bank", "At", "Account", "Acc", "RM", "The", "My", "His", "Her", "Their", "Me", "Him", "For", "And"];
const REFERENCE_STOP: &[&str] = &["to", "at", "via", "and", "from", "account", "acc", "bank", "rm", "please", "pls", "tomorrow", "today", "now", "using"];
const REFERENCE_SKIP_LEAD: &[&str] = &["my", "the", "a", "our", "his", "her"];

fn parse_amount(int: &str, frac: Option<&str>) -> Option<Money> {
    format!("{}{}", int, frac.unwrap_or("")).parse().ok()
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

#[derive(Default)]
struct TurnFields {
    name: Option<String>,
    bank: Option<String>,
    account: Option<String>,
    amounts: BTreeSet<Money>,
    reference: Option<String>,
    pairs: Vec<(Money, String)>,
}

fn is_bank_word(word: &str, banks: &[Bank]) -> bool {
    banks.iter().any(|b| b.names.iter().any(|n| n.eq_ignore_ascii_case(word)))
}

fn clean_name(raw: &str, banks: &[Bank]) -> Option<String> {
    let words: Vec<&str> = raw
        .split_whitespace()
        .take_while(|w| !NOT_NAMES.contains(w) && !is_bank_word(w, banks))
        .collect();
    if words.is_empty() {
        None
    } else {
        Some(words.join(" "))
    }
}

fn find_bank(text: &str, banks: &[Bank]) -> Option<String> {
    let lower = text.to_lowercase();
    let mut best: Option<(usize, &str)> = None;
    for b in banks {
        for n in &b.names {
            let pat = format!(r"\b{}\b", regex::escape(&n.to_lowercase()));
            if let Some(m) = Regex::new(&pat).ok().and_then(|r| r.find(&lower)) {
                if best.is_none_or(|(pos, _)| m.start() < pos) {
                    best = Some((m.start(), &b.name));
                }
            }
        }
    }
    best.map(|(_, n)| n.to_string())
        .or_else(|| UNKNOWN_BANK.find(text).map(|m| m.as_str().to_string()))
}

fn find_identifier(text: &str) -> Option<String> {
    IDENTIFIERS
        .iter()
        .filter_map(|re| re.find(text))
        .min_by_key(|m| (m.start(), std::cmp::Reverse(m.len())))
        .map(|m| m.as_str().to_string())
}

fn find_reference(text: &str) -> Option<String> {
    for caps in REFERENCE.captures_iter(text) {
        let words: Vec<&str> = caps[1]
            .split_whitespace()
            .skip_while(|w| REFERENCE_SKIP_LEAD.contains(w))
            .take_while(|w| !REFERENCE_STOP.contains(w))
            .collect();
        if !words.is_empty() {
            return Some(title_case(&words.join(" ")));
        }
    }
    None
}

fn find_amounts(text: &str) -> BTreeSet<Money> {
    let mut out = BTreeSet::new();
    for c in RM_AMOUNT.captures_iter(text) {
        let m = match (c.get(1), c.get(3)) {
            (Some(int), _) => parse_amount(int.as_str(), c.get(2).map(|f| f.as_str())),
            (None, Some(plain)) => plain.as_str().parse().ok(),
            _ => None,
        };
        out.extend(m);
    }
    for c in VERB_AMOUNT.captures_iter(text) {
        out.extend(c[1].parse::<Money>().ok());
    }
    if let Some(c) = BARE_AMOUNT.captures(text) {
        out.extend(parse_amount(&c[1], c.get(2).map(|f| f.as_str())));
    }
    out
}

fn extract_turn(text: &str, banks: &[Bank]) -> TurnFields {
    let mut f = TurnFields::default();
    let mut free_text = String::new();

    for line in text.lines() {
        if line.trim() == crate::payment::IMAGE_TEXT_MARKER {
            continue;
        }
        if let Some(c) = KEY_VALUE.captures(line) {
            let key = c[1].to_lowercase();
            let value = c[2].trim().to_string();
            match key.as_str() {
                k if k.starts_with("recipient") || k == "beneficiary" || k == "to" => {
                    f.name = clean_name(&value, banks).or(f.name)
                }
                k if k.starts_with("bank") => f.bank = find_bank(&value, banks).or(Some(value)),
                k if k.starts_with("account") || k.starts_with("phone") => {
                    f.account = find_identifier(&value).or(f.account)
                }
                "amount" => f.amounts.extend(find_amounts(&value).into_iter().chain(value.parse::<Money>().ok())),
                _ => f.reference = Some(value),
            }
            continue;
        }
        if let Some(c) = SPEAKER.captures(line) {
            let rest = c[2].to_string();
            if ASKS_TO_BE_PAID.is_match(&rest) && !is_bank_word(&c[1], banks) {
                f.name = Some(c[1].to_string());
            }
            free_text.push_str(&rest);
            free_text.push('\n');
            continue;
        }
        free_text.push_str(line);
        free_text.push('\n');
    }

    let t = free_text.trim();
    f.pairs = PAIR
        .captures_iter(t)
        .filter_map(|c| Some((c[1].parse::<Money>().ok()?, c[2].to_string())))
        .filter(|(_, n)| !NOT_NAMES.contains(&n.as_str()) && !is_bank_word(n, banks))
        .collect();
    if f.name.is_none() {
        f.name = RECIPIENT.captures_iter(t).find_map(|c| clean_name(&c[1], banks));
    }
    if f.bank.is_none() {
        f.bank = find_bank(t, banks);
    }
    if f.account.is_none() {
        f.account = find_identifier(t);
    }
    f.amounts.extend(find_amounts(t));
    let transfer_turn = TRANSFER_CUE.is_match(t) || f.name.is_some() || !f.amounts.is_empty();
    if f.reference.is_none() && transfer_turn {
        f.reference = find_reference(t);
    }
    f
}

#[derive(Default)]
struct Replay {
    draft: TransferDraft,
    candidates: Vec<TransferDraft>,
    ambiguous_amount: bool,
    touched: bool,
}

impl Replay {
    fn apply(&mut self, text: &str, banks: &[Bank]) {
        let f = extract_turn(text, banks);
        let distinct: BTreeSet<&str> = f.pairs.iter().map(|(_, n)| n.as_str()).collect();
        if distinct.len() >= 2 {
            self.candidates = f
                .pairs
                .iter()
                .map(|(amount, name)| TransferDraft {
                    recipient_name: Some(name.clone()),
                    amount: Some(*amount),
                    bank_name: None,
                    account_number: None,
                    reference: DEFAULT_REFERENCE.to_string(),
                })
                .collect();
            self.draft = TransferDraft::default();
            self.ambiguous_amount = false;
            self.touched = true;
            return;
        }
        if !self.candidates.is_empty() {
            let candidates = std::mem::take(&mut self.candidates);
            if let Some(i) = select_retained(&candidates, text) {
                self.draft = candidates[i].clone();
                self.touched = true;
                return;
            }
        }
        if let (Some(new), Some(old)) = (&f.name, &self.draft.recipient_name) {
            if !new.eq_ignore_ascii_case(old) {
                self.draft = TransferDraft::default();
            }
        }
        let d = &mut self.draft;
        if f.name.is_some() {
            d.recipient_name = f.name;
        }
        if f.bank.is_some() {
            d.bank_name = f.bank;
        }
        if f.account.is_some() {
            d.account_number = f.account;
        }
        match f.amounts.len() {
            0 => {}
            1 => {
                d.amount = f.amounts.into_iter().next();
                self.ambiguous_amount = false;
            }
            _ => {
                d.amount = None;
                self.ambiguous_amount = true;
            }
        }
        if let Some(r) = f.reference {
            d.reference = r;
        }
        self.touched = self.touched || *d != TransferDraft::default() || self.ambiguous_amount;
    }
}

fn message_for(d: &TransferDraft, banks: &[Bank], ambiguous_amount: bool) -> String {
    if ambiguous_amount {
        return "I noticed more than one amount. How much would you like to transfer?".to_string();
    }
    if d.amount.is_some_and(|a| !a.is_positive()) {
        return "Please enter a valid amount greater than zero.".to_string();
    }
    if let Some(bank) = &d.bank_name {
        if !banks.iter().any(|b| &b.name == bank) {
            return format!("Sorry, {bank} is not a supported bank. Could you provide a valid bank name?");
        }
    }
    let missing = d.missing_fields();
    if missing.is_empty() {
        return format!(
            "Please confirm the transfer of {} to {} at {} ({}).",
            d.amount.unwrap_or_default(),
            d.recipient_name.as_deref().unwrap_or_default(),
            d.bank_name.as_deref().unwrap_or_default(),
            d.account_number.as_deref().unwrap_or_default()
        );
    }
    use crate::payment::Field;
    if missing == [Field::Amount] {
        return "Got it. How much would you like to transfer?".to_string();
    }
    if let Some(name) = &d.recipient_name {
        if missing.contains(&Field::BankName) && missing.contains(&Field::AccountNumber) {
            return format!("Could you provide the bank account details of {name}?");
        }
    }
    if missing.contains(&Field::RecipientName) && missing.len() == 1 {
        return "Who would you like to transfer the money to?".to_string();
    }
    let names: Vec<&str> = missing.iter().map(|f| f.describe()).collect();
    format!("Could you provide the {}?", names.join(" and "))
}

pub(super) fn extract(request: &BackendRequest) -> PaymentAgentResult {
    let banks = bank_list(&request.prompt);
    let mut replay = Replay::default();
    for turn in &request.history {
        match turn.role {
            Role::User => replay.apply(&turn.text, &banks),
            Role::Assistant if DONE.is_match(&turn.text) => replay = Replay::default(),
            Role::Assistant => {}
        }
    }
    replay.apply(&request.message, &banks);

    if replay.candidates.len() >= 2 {
        return PaymentAgentResult {
            transfers: replay.candidates,
            message: MULTIPLE_TRANSFERS_MESSAGE.to_string(),
        };
    }
    if !replay.touched {
        return PaymentAgentResult {
            transfers: Vec::new(),
            message: "Sure. Who would you like to transfer money to, and how much?".to_string(),
        };
    }
    let message = message_for(&replay.draft, &banks, replay.ambiguous_amount);
    PaymentAgentResult {
        transfers: vec![replay.draft],
        message,
    }
}
