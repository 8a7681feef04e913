use std::sync::LazyLock;

use regex::Regex;

use crate::envelope::{ChatTurn, Role};
use crate::intent::{IntentCategory, IntentResult};

pub(super) const UNCLEAR_MESSAGE: &str =
    "Sorry, I didn't quite get that. Could you tell me what you'd like to do, for example make a transfer or check your balance?";

fn re(p: &str) -> Regex {
    Regex::new(&format!("(?i){p}")).expect("intent rule compiles")
}

static SHORTHAND: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"\b(tsfr|trf|trsf|xfer|tf)\b", "transfer"),
        (r"\b(acc|acct|a/c)\b", "account"),
        (r"\bamt\b", "amount"),
        (r"\bbal\b", "balance"),
        (r"\b(txn|trx)s?\b", "transactions"),
        (r"\bpls\b", "please"),
    ]
    .into_iter()
    .map(|(p, r)| (re(p), r))
    .collect()
});

static PAY_VERB: LazyLock<Regex> = LazyLock::new(|| re(r"\b(transfer|send|pay|remit|duitnow)\b"));
static AMOUNT: LazyLock<Regex> = LazyLock::new(|| re(r"\brm\s?\d|\b\d+(\.\d{1,2})?\b"));
static TO_SOMEONE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:to|[Pp]ay)\s+[A-Z][a-z]+").unwrap());
static QUESTION_START: LazyLock<Regex> =
    LazyLock::new(|| re(r"^\s*(what|what's|whats|how|can|could|is|are|does|do|why|when|where|which|who|will|should|may)\b"));
static INSIGHT: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(spend|spent|spending|expenses?|budget\w*|insights?|analy[sz]\w*|breakdown|saving habits?|save more|where (does|did) my money go)\b")
});
static HISTORY: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(my|show|list|view|see|check)\b.{0,25}\b(history|transactions?|statements?|activity|last (transfer|payment)s?|past (transfer|payment)s?)\b|\bdid i (send|transfer|pay)\b")
});
static ACCOUNT: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(my|check)\b.{0,20}\b(balance|account number|account status|account details|account)\b|\bhow much (money )?(do i have|i have)\b|^\s*balance\??\s*$")
});
static FAQ_TOPIC: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(rates?|interest|fees?|charges?|limits?|open|apply|eligib\w*|requirements?|documents?|cards?|loans?|duitnow|favou?rites?|transferees?|2fa|otp|security|branch(es)?|hours|support|scam|fraud|report|insurance|fixed deposit|profit|dormant|freeze|block|reset|forgot|password|pin|app|save|savings|account|transfers?|overseas|bills?|codes?)\b")
});
static CHAT: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(hi|hello|hey|thanks|thank you|good (morning|afternoon|evening|night)|how are you|bye|goodbye|who are you|joke|weather|lol)\b")
});
static FOLLOW_UP: LazyLock<Regex> = LazyLock::new(|| {
    re(r"^\s*(yes|yeah|yep|ok|okay|sure|confirm|correct|no|nope|the (first|second|third|last) one|first|second|third|last|actually|make it|change (it|the amount))\b|^\s*(rm\s?)?\d[\d,]*(\.\d{1,2})?\b|\b(first|second|third|last)( one)?\W*$|\bbank\b|\baccount (no|number)\b|\b\d{6,}\b")
});

fn expand(text: &str) -> String {
    SHORTHAND.iter().fold(text.to_string(), |acc, (re, rep)| re.replace_all(&acc, *rep).into_owned())
}

/// Classification from the message alone; `None` when it carries no signal.
fn direct(text: &str) -> Option<IntentCategory> {
    let t = expand(text);
    let question = QUESTION_START.is_match(&t);
    if PAY_VERB.is_match(&t) && (AMOUNT.is_match(&t) || TO_SOMEONE.is_match(&t) || !question) {
        return Some(IntentCategory::Payment);
    }
    if INSIGHT.is_match(&t) {
        return Some(IntentCategory::Insight);
    }
    if HISTORY.is_match(&t) {
        return Some(IntentCategory::HistoryInquiry);
    }
    if ACCOUNT.is_match(&t) {
        return Some(IntentCategory::AccountInquiry);
    }
    if (question || t.trim_end().ends_with('?')) && FAQ_TOPIC.is_match(&t) {
        return Some(IntentCategory::Faq);
    }
    if CHAT.is_match(&t) {
        return Some(IntentCategory::Chat);
    }
    None
}

/// Intent of the most recent user turn in `history`, using the turns before it.
fn previous_intent(history: &[ChatTurn]) -> Option<IntentCategory> {
    let idx = history.iter().rposition(|t| t.role == Role::User)?;
    let before = &history[..idx];
    direct(&history[idx].text).or_else(|| {
        if FOLLOW_UP.is_match(&history[idx].text) {
            previous_intent(before)
        } else {
            None
        }
    })
}

pub(super) fn classify(message: &str, history: &[ChatTurn]) -> IntentResult {
    if let Some(intent) = direct(message) {
        return IntentResult::routed(intent);
    }
    // a reply to our own question continues the conversation it came from
    let answers_question = history
        .iter()
        .rev()
        .find(|t| t.role == Role::Assistant)
        .is_some_and(|t| t.text.contains('?'));
    if FOLLOW_UP.is_match(message) || answers_question {
        if let Some(intent) = previous_intent(history) {
            return IntentResult::routed(intent);
        }
    }
    IntentResult::clarify(IntentCategory::Chat, UNCLEAR_MESSAGE)
}
