//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use chatbank_core::backend::FixtureBackend;
use chatbank_core::banking::{AmlList, Bank, BankConfig, SeedFile};
use chatbank_core::faq::KnowledgeDoc;
use chatbank_core::pipeline::AgentRegistry;

pub const ACCOUNT: &str = "1001234567";

pub fn registry() -> AgentRegistry {
    let bank = Bank::new(SeedFile::builtin(), BankConfig::default(), AmlList::default());
    AgentRegistry::builtin(Arc::new(FixtureBackend::builtin()), Arc::new(bank))
}

const WORDS: &[&str] = &[
    "transfer", "limit", "daily", "savings", "interest", "card", "fee", "duitnow", "merchant", "loan", "deposit",
    "statement", "password", "otp", "scam", "account", "branch", "support", "overseas", "bill", "balance", "app",
];

/// `n` synthetic documents from a fixed linear congruential sequence.
pub fn corpus(n: usize) -> Vec<KnowledgeDoc> {
    let mut x: u64 = 0x9e37_79b9;
    let mut next = move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 33) as usize
    };
    (0..n)
        .map(|i| {
            let len = 8 + next() % 20;
            let body: Vec<&str> = (0..len).map(|_| WORDS[next() % WORDS.len()]).collect();
            KnowledgeDoc {
                doc_id: format!("d{i:05}"),
                title: format!("{} {}", WORDS[next() % WORDS.len()], WORDS[next() % WORDS.len()]),
                body: body.join(" "),
                tags: Vec::new(),
            }
        })
        .collect()
}
