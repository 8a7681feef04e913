//! Extractive FAQ answers and rule-based follow-up rewriting.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::envelope::ChatTurn;
use crate::faq::{content_terms, FaqAnswer, ReformulatedQuery, FALLBACK_MESSAGE, KNOWLEDGE_HEADER, KNOWLEDGE_FOOTER};

fn stem(w: &str) -> String {
    let w = w.strip_suffix("es").filter(|s| s.ends_with("ss") || s.ends_with('x')).unwrap_or(w);
    w.strip_suffix('s').filter(|s| s.len() > 2).unwrap_or(w).to_string()
}

fn terms(text: &str) -> BTreeSet<String> {
    content_terms(text).iter().map(|w| stem(w)).collect()
}

struct Doc {
    title: String,
    body: String,
}

static DOC_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[[^\]\n]+\] ").unwrap());

fn context_docs(prompt: &str) -> Vec<Doc> {
    let Some(start) = prompt.find(KNOWLEDGE_HEADER) else {
        return Vec::new();
    };
    let rest = &prompt[start + KNOWLEDGE_HEADER.len()..];
    let block = rest.find(KNOWLEDGE_FOOTER).map_or(rest, |end| &rest[..end]);
    let starts: Vec<usize> = DOC_START.find_iter(block).map(|m| m.start()).collect();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let chunk = &block[s..starts.get(i + 1).copied().unwrap_or(block.len())];
            let chunk = chunk.trim();
            let header_end = chunk.find('\n').unwrap_or(chunk.len());
            let title = chunk[..header_end].split_once("] ").map_or("", |(_, t)| t).trim().to_string();
            Doc {
                title,
                body: chunk[header_end..].trim().to_string(),
            }
        })
        .filter(|d| !d.body.is_empty())
        .collect()
}

/// Sentences and list items, in order.
fn units(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let is_item = line.starts_with("- ") || line.chars().next().is_some_and(|c| c.is_ascii_digit()) && line.contains(". ");
        if is_item {
            out.push(line.to_string());
            continue;
        }
        let mut cur = String::new();
        let chars: Vec<char> = line.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            cur.push(c);
            let boundary = matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
            if boundary {
                out.push(cur.trim().to_string());
                cur.clear();
            }
        }
        if !cur.trim().is_empty() {
            out.push(cur.trim().to_string());
        }
    }
    out
}

pub(super) fn answer(prompt: &str, query: &str) -> FaqAnswer {
    let docs = context_docs(prompt);
    let q = terms(query);
    let overlap = |text: &str| terms(text).intersection(&q).count();
    let Some(doc) = docs
        .iter()
        .enumerate()
        .max_by_key(|(i, d)| (overlap(&format!("{} {}", d.title, d.body)), std::cmp::Reverse(*i)))
        .map(|(_, d)| d)
    else {
        return FaqAnswer {
            message: FALLBACK_MESSAGE.to_string(),
        };
    };
    let us = units(&doc.body);
    let scores: Vec<usize> = us.iter().map(|u| overlap(u)).collect();
    let best = scores.iter().copied().max().unwrap_or(0);
    let mut picked: Vec<usize> = if best == 0 {
        vec![0]
    } else {
        scores.iter().enumerate().filter(|(_, s)| **s == best).map(|(i, _)| i).take(2).collect()
    };
    // a sentence introducing a list brings its items along
    if let Some(&last) = picked.last() {
        if us[last].ends_with(':') {
            picked.extend((last + 1..us.len()).take_while(|&i| us[i].starts_with("- ") || us[i].chars().next().is_some_and(|c| c.is_ascii_digit())));
        }
    }
    let parts: Vec<&str> = picked.iter().map(|&i| us[i].as_str()).collect();
    let joiner = if parts.iter().any(|p| p.starts_with("- ")) { "\n" } else { " " };
    FaqAnswer {
        message: parts.join(joiner),
    }
}

const TOPICS: &[&str] = &[
    "favorite transferees",
    "favourite transferees",
    "daily transfer limit",
    "transfer limit",
    "savings account",
    "fixed deposit",
    "debit card",
    "credit card",
    "duitnow qr",
    "duitnow",
    "interest rate",
    "bill payment",
    "overseas transfer",
    "2fa",
    "secure code",
    "personal loan",
];

static PRONOUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(it|that|this|them|they|those|these)\b").unwrap());
static HOW_MANY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^how many\s+(can|do|should|may|could)\b").unwrap());

fn topic_in(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    TOPICS.iter().copied().find(|t| lower.contains(t))
}

pub(super) fn reformulate(message: &str, history: &[ChatTurn]) -> ReformulatedQuery {
    let query = message.split_whitespace().collect::<Vec<_>>().join(" ");
    let keep = ReformulatedQuery { query: query.clone() };
    if topic_in(&query).is_some() {
        return keep;
    }
    let Some(topic) = history.iter().rev().find_map(|t| topic_in(&t.text)) else {
        return keep;
    };
    if let Some(m) = HOW_MANY.find(&query) {
        let verb = &query[m.start() + "how many".len()..m.end()];
        return ReformulatedQuery {
            query: format!("How many {topic}{verb}{}", &query[m.end()..]),
        };
    }
    if let Some(m) = PRONOUN.find(&query) {
        let word = m.as_str().to_lowercase();
        let replacement = if matches!(word.as_str(), "them" | "they" | "those" | "these") {
            topic.to_string()
        } else {
            format!("the {topic}")
        };
        return ReformulatedQuery {
            query: format!("{}{}{}", &query[..m.start()], replacement, &query[m.end()..]),
        };
    }
    if query.split_whitespace().count() <= 4 {
        let base = query.trim_end_matches(['?', '.', '!']);
        return ReformulatedQuery {
            query: format!("{base} for {topic}?"),
        };
    }
    keep
}
