//! HTTP facade for the event recommender: sessions, turns, visibility and
//! window events, event details, survey intake and operator reports.

pub mod api;
pub mod config;
pub mod journal;

use std::path::Path;
use std::sync::Arc;

use crs_core::catalog::{ingest_jsonl, Catalog, CategoryMap};
use crs_core::clock::{Clock, SystemClock};
use crs_core::dialog::Engine;
use crs_core::gateway::{Gateway, HttpProvider, MockProvider, Provider};
use crs_core::inquiry::{FetchConfig, HttpFetcher};
use crs_core::prompts::PromptSet;
use crs_core::telemetry::{JsonlStore, MemoryStore, MetricStore};
use crs_core::UsdRate;

pub use api::{router, AppState};
pub use config::{ConfigError, ProviderKind, ServerConfig};
pub use journal::{Journal, JournalEntry};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("catalog {path}: {message}")]
    Catalog { path: String, message: String },
    #[error("{0}")]
    Component(String),
}

pub fn load_catalog(path: &Path) -> Result<Catalog, StartupError> {
    let err = |message: String| StartupError::Catalog { path: path.display().to_string(), message };
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let (catalog, report) = ingest_jsonl(std::io::BufReader::new(file), &CategoryMap::default()).map_err(|e| err(e.to_string()))?;
    if report.rejected > 0 {
        tracing::warn!(rejected = report.rejected, accepted = catalog.len(), "catalog records rejected");
    }
    Ok(catalog)
}

/// Engine wired from configuration, on the system clock.
pub fn build_engine(cfg: &ServerConfig) -> Result<Engine, StartupError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let catalog = Arc::new(load_catalog(&cfg.catalog)?);
    let provider: Arc<dyn Provider> = match cfg.provider {
        ProviderKind::Mock => {
            let path = cfg.mock_script.as_ref().ok_or_else(|| StartupError::Component("mock_script is not set".into()))?;
            Arc::new(MockProvider::from_file(path, clock.clone()).map_err(|e| StartupError::Component(e.to_string()))?)
        }
        ProviderKind::Http => Arc::new(HttpProvider::new(cfg.http.clone())),
    };
    let rate = UsdRate::new(cfg.cost_rate).ok_or_else(|| StartupError::Component("cost rate must be positive".into()))?;
    let gateway = Arc::new(Gateway::new(provider, rate, clock));
    let store: Arc<dyn MetricStore> = match &cfg.data_dir {
        Some(dir) => Arc::new(JsonlStore::open(dir.join("metrics")).map_err(|e| StartupError::Component(e.to_string()))?),
        None => Arc::new(MemoryStore::new()),
    };
    let mut engine = Engine::new(catalog, gateway, store);
    if let Some(p) = &cfg.prompts {
        let text = std::fs::read_to_string(p).map_err(|e| StartupError::Component(format!("{}: {e}", p.display())))?;
        engine = engine.with_prompts(Arc::new(PromptSet::from_toml(&text).map_err(|e| StartupError::Component(e.to_string()))?));
    }
    if cfg.fetch_websites {
        engine = engine.with_fetcher(Arc::new(HttpFetcher::new(FetchConfig::default())));
    }
    Ok(engine)
}

/// Application state from configuration, restoring journaled sessions.
pub fn build_app(cfg: &ServerConfig) -> Result<AppState, StartupError> {
    let engine = Arc::new(build_engine(cfg)?);
    match &cfg.data_dir {
        Some(dir) => {
            let journal = Journal::open(dir.join("sessions")).map_err(|e| StartupError::Component(e.to_string()))?;
            AppState::restore(engine, journal, cfg.operator_token.clone()).map_err(|e| StartupError::Component(e.to_string()))
        }
        None => Ok(AppState::new(engine, None, cfg.operator_token.clone())),
    }
}

/// Bind and serve until Ctrl-C.
pub async fn serve(cfg: ServerConfig) -> Result<(), StartupError> {
    let app = build_app(&cfg)?;
    let listener =
        tokio::net::TcpListener::bind(&cfg.bind).await.map_err(|e| StartupError::Component(format!("{}: {e}", cfg.bind)))?;
    tracing::info!(bind = %cfg.bind, sessions = app.session_count(), "serving /v1");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| StartupError::Component(e.to_string()))
}
