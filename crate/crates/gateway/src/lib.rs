//! HTTP gateway: chat sessions, transfer decisions and admin reloads over
//! JSON, with a digest-only audit stream.

pub mod api;
pub mod audit;
pub mod error;
mod routes;
mod service;
pub mod session;

use std::sync::Arc;

use chatbank_core::clock::{Clock, SystemClock};
use chatbank_core::config::{AppConfig, ConfigError};

pub use audit::{AuditEvent, AuditKind, AuditLog};
pub use error::ApiError;
pub use routes::router;
pub use service::{Gateway, GatewaySettings};

/// How often the background task looks for idle sessions.
const SWEEP_INTERVAL: std::time::Duration = std::time::Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("audit log: {0}")]
    Audit(std::io::Error),
    #[error("cannot bind or serve: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the gateway from config on the system clock.
pub fn build_gateway(config: &AppConfig) -> Result<Arc<Gateway>, ServeError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let bank = Arc::new(config.build_bank(clock.clone())?);
    let registry = Arc::new(config.build_registry(config.build_backend()?, bank)?);
    let audit = match &config.gateway.audit_log {
        Some(path) => AuditLog::open(path).map_err(ServeError::Audit)?,
        None => AuditLog::in_memory(),
    };
    Ok(Arc::new(Gateway::new(registry, clock, audit, GatewaySettings::from_config(config))))
}

/// Serves until the process is stopped.
pub async fn serve(config: &AppConfig) -> Result<(), ServeError> {
    let gateway = build_gateway(config)?;
    if gateway.settings().admin_token.is_none() {
        tracing::warn!("{} is unset; admin endpoints will refuse all requests", config.gateway.admin_token_env);
    }
    let sweeper = gateway.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(SWEEP_INTERVAL);
        loop {
            tick.tick().await;
            let n = sweeper.expire_idle();
            if n > 0 {
                tracing::info!("expired {n} idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(&config.gateway.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(gateway)).await?;
    Ok(())
}
