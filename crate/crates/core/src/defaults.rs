//! Data files compiled into the library so every binary works without a data directory.

pub const ADAPTERS_JSON: &str = include_str!("../data/adapters.json");
pub const BANKS_JSON: &str = include_str!("../data/banks.json");
pub const BLOCKLIST_JSON: &str = include_str!("../data/blocklist.json");
pub const AML_JSON: &str = include_str!("../data/aml.json");
pub const OCR_FIXTURES_JSON: &str = include_str!("../data/ocr_fixtures.json");
pub const ACCOUNTS_JSON: &str = include_str!("../data/accounts.json");
pub const KNOWLEDGE_JSONL: &str = include_str!("../data/knowledge.jsonl");
pub const DESK_SUITE_JSONL: &str = include_str!("../data/desk_suite.jsonl");
pub const CONFIG_TOML: &str = include_str!("../data/config.toml");
