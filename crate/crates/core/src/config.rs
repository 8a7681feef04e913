//! Runtime configuration loaded from TOML, and construction of the shared
//! pipeline objects from it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{
    AdapterConfigError, AdapterSet, BackendKind, FixtureBackend, HttpBackendConfig, HttpChatBackend, ModelBackend,
    DEFAULT_RETRY_LIMIT,
};
use crate::banking::{AmlList, Bank, BankConfig, SeedFile};
use crate::clock::{Clock, SystemClock};
use crate::envelope::DEFAULT_HISTORY_CAP;
use crate::faq::{FaqConfig, HashedNgramEmbedder, KnowledgeStore, StoreError};
use crate::guardrails::{FixtureImageModerator, PolicyError, PolicyStore};
use crate::intent::IntentRoutes;
use crate::payment::{BankDirectory, FixtureOcr, IdentifierRules};
use crate::pipeline::AgentRegistry;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid {what}: {source}")]
    Json {
        what: &'static str,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Adapters(#[from] AdapterConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Knowledge(#[from] StoreError),
    #[error("fixture file: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct BackendSection {
    pub kind: BackendKind,
    pub fixture_file: Option<PathBuf>,
    pub http: HttpBackendConfig,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Fixture,
            fixture_file: None,
            http: HttpBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct PipelineSection {
    pub history_cap: usize,
    pub retry_limit: u32,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            history_cap: DEFAULT_HISTORY_CAP,
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct SessionSection {
    pub idle_timeout_secs: u64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection { idle_timeout_secs: 900 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct PriceTable {
    pub prompt_per_1k_tokens: f64,
    pub completion_per_1k_tokens: f64,
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable {
            prompt_per_1k_tokens: 0.0005,
            completion_per_1k_tokens: 0.0015,
        }
    }
}

impl PriceTable {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 / 1000.0 * self.prompt_per_1k_tokens
            + completion_tokens as f64 / 1000.0 * self.completion_per_1k_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct EvalSection {
    pub target_latency_ms: u64,
    pub workers: usize,
    pub max_transactional_error_rate: f64,
    pub max_faq_error_rate: f64,
    pub reference_cost_per_case: f64,
    pub prices: PriceTable,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            target_latency_ms: 1000,
            workers: 4,
            max_transactional_error_rate: 0.005,
            max_faq_error_rate: 0.02,
            reference_cost_per_case: 0.001,
            prices: PriceTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct GatewaySection {
    pub bind: String,
    pub admin_token_env: String,
    pub audit_log: Option<PathBuf>,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            bind: "127.0.0.1:8080".to_string(),
            admin_token_env: "CHATBANK_ADMIN_TOKEN".to_string(),
            audit_log: None,
        }
    }
}

/// Optional overrides for the built-in data files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct DataSection {
    pub adapters: Option<PathBuf>,
    pub banks: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    pub aml: Option<PathBuf>,
    pub accounts: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub ocr_fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct AppConfig {
    pub backend: BackendSection,
    pub pipeline: PipelineSection,
    pub bank: BankConfig,
    pub faq: FaqConfig,
    pub session: SessionSection,
    pub eval: EvalSection,
    pub gateway: GatewaySection,
    pub data: DataSection,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T>(what: &'static str, r: Result<T, serde_json::Error>) -> Result<T, ConfigError> {
    r.map_err(|source| ConfigError::Json { what, source })
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Relative data paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config = AppConfig::from_toml_str(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut config.data;
        for p in [
            &mut d.adapters,
            &mut d.banks,
            &mut d.blocklist,
            &mut d.aml,
            &mut d.accounts,
            &mut d.knowledge,
            &mut d.ocr_fixtures,
            &mut config.backend.fixture_file,
            &mut config.gateway.audit_log,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn builtin() -> Self {
        AppConfig::from_toml_str(crate::defaults::CONFIG_TOML).expect("built-in config parses")
    }

    fn text_or(&self, path: &Option<PathBuf>, builtin: &'static str) -> Result<String, ConfigError> {
        match path {
            Some(p) => read(p),
            None => Ok(builtin.to_string()),
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ModelBackend>, ConfigError> {
        Ok(match self.backend.kind {
            BackendKind::Fixture => match &self.backend.fixture_file {
                Some(p) => Arc::new(FixtureBackend::load(p).map_err(|e| ConfigError::Fixture(e.to_string()))?),
                None => Arc::new(FixtureBackend::builtin()),
            },
            BackendKind::HttpChatCompletion => Arc::new(HttpChatBackend::new(&self.backend.http)),
        })
    }

    pub fn build_bank(&self, clock: Arc<dyn Clock>) -> Result<Bank, ConfigError> {
        use crate::defaults::{ACCOUNTS_JSON, AML_JSON};
        let seed = json("accounts", SeedFile::from_json(&self.text_or(&self.data.accounts, ACCOUNTS_JSON)?))?;
        let aml = json("AML list", AmlList::from_json(&self.text_or(&self.data.aml, AML_JSON)?))?;
        Ok(Bank::with_clock(seed, self.bank.clone(), aml, clock))
    }

    pub fn build_knowledge(&self) -> Result<KnowledgeStore, ConfigError> {
        let store = KnowledgeStore::new(Arc::new(HashedNgramEmbedder::default()));
        store.ingest_jsonl(&self.text_or(&self.data.knowledge, crate::defaults::KNOWLEDGE_JSONL)?)?;
        Ok(store)
    }

    pub fn build_registry(&self, backend: Arc<dyn ModelBackend>, bank: Arc<Bank>) -> Result<AgentRegistry, ConfigError> {
        use crate::defaults::{ADAPTERS_JSON, BANKS_JSON, BLOCKLIST_JSON, OCR_FIXTURES_JSON};
        let adapters = AdapterSet::from_json(&self.text_or(&self.data.adapters, ADAPTERS_JSON)?)?;
        let policy = PolicyStore::from_json(&self.text_or(&self.data.blocklist, BLOCKLIST_JSON)?)?;
        let directory = json("bank directory", BankDirectory::from_json(&self.text_or(&self.data.banks, BANKS_JSON)?))?;
        let ocr = json(
            "OCR fixtures",
            FixtureOcr::from_json(&self.text_or(&self.data.ocr_fixtures, OCR_FIXTURES_JSON)?),
        )?;
        Ok(AgentRegistry {
            backend,
            adapters,
            policy: Arc::new(policy),
            image_moderator: Arc::new(FixtureImageModerator::builtin()),
            ocr: Arc::new(ocr),
            routes: IntentRoutes::default(),
            directory,
            identifier_rules: IdentifierRules::default(),
            knowledge: Arc::new(self.build_knowledge()?),
            bank,
            faq: self.faq,
            retry_limit: self.pipeline.retry_limit,
        })
    }

    /// Backend, bank and registry in one go, on the system clock.
    pub fn build(&self) -> Result<AgentRegistry, ConfigError> {
        let bank = Arc::new(self.build_bank(Arc::new(SystemClock))?);
        self.build_registry(self.build_backend()?, bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;

    #[test]
    fn builtin_config_matches_defaults() {
        let c = AppConfig::builtin();
        assert_eq!(c.bank, BankConfig::default());
        assert_eq!(c.faq, FaqConfig::default());
        assert_eq!(c.pipeline, PipelineSection::default());
        assert_eq!(c.eval, EvalSection::default());
        assert_eq!(c.session.idle_timeout_secs, 900);
        assert_eq!(c.backend.kind, BackendKind::Fixture);
    }

    #[test]
    fn empty_config_is_valid() {
        let c = AppConfig::from_toml_str("").unwrap();
        assert_eq!(c.bank.two_fa.threshold, Money::from_sen(25_000));
    }

    #[test]
    fn unknown_backend_kind_is_rejected() {
        assert!(AppConfig::from_toml_str("[backend]\nkind = \"telepathy\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[data]\nknowledge = \"kb.jsonl\"\n").unwrap();
        let c = AppConfig::load(&path).unwrap();
        assert_eq!(c.data.knowledge.unwrap(), dir.path().join("kb.jsonl"));
    }

    #[test]
    fn zero_price_table_costs_nothing() {
        let p = PriceTable {
            prompt_per_1k_tokens: 0.0,
            completion_per_1k_tokens: 0.0,
        };
        assert_eq!(p.cost(10_000, 10_000), 0.0);
    }
}
