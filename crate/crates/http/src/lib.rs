//! HTTP+JSON front ends for the document and review services, and the
//! HTTP transport the services use to reach each other.

mod api;
mod config;
mod doc;
mod persist;
mod review;
mod transport;

pub use api::{ApiError, ErrorBody};
pub use config::{ClockMode, ConfigError, Role, ServiceConfig};
pub use doc::{doc_router, DocApp};
pub use persist::Persister;
pub use review::{review_router, ReviewApp};
pub use transport::HttpTransport;

use std::sync::Arc;

use revbridge_core::bridge::{Courier, RetryPolicy};
use revbridge_core::clock::{Clock, ScriptedClock, SystemClock};
use revbridge_core::docs::{DocService, DocState};
use revbridge_core::ids::IdGenerator;
use revbridge_core::review::{ReviewConfig, ReviewService, ReviewState};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Service(#[from] revbridge_core::Error),
    #[error("state file: {0}")]
    State(#[from] persist::PersistError),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn clock_for(mode: ClockMode) -> Arc<dyn Clock> {
    match mode {
        ClockMode::Real => Arc::new(SystemClock),
        ClockMode::Scripted => Arc::new(ScriptedClock::default()),
    }
}

fn ids_for(seed: Option<u64>, restored_events: usize) -> IdGenerator {
    match seed {
        Some(seed) => IdGenerator::seeded(seed.wrapping_add(restored_events as u64)),
        None => IdGenerator::from_entropy(),
    }
}

/// Builds the router for the service `config.role` names, restoring state
/// from the state file when one exists.
pub fn build_router(config: &ServiceConfig) -> Result<axum::Router, ServeError> {
    let clock = clock_for(config.clock);
    let transport = Arc::new(HttpTransport::new(&config.peer_url)?);
    let courier = Courier::new(
        config.secret.as_bytes(),
        transport,
        RetryPolicy::default(),
        clock.clone(),
    )?;
    let persister = config.state_file.clone().map(Persister::new);
    match config.role {
        Role::Doc => {
            let state: DocState = match &persister {
                Some(p) => p.load()?.unwrap_or_default(),
                None => DocState::default(),
            };
            let ids = ids_for(config.seed, state.events().len());
            let service = DocService::restore(config.secret.as_bytes(), clock, ids, state)?;
            service.connect(courier)?;
            Ok(doc_router(DocApp::new(Arc::new(service), persister, config.test_endpoints)))
        }
        Role::Review => {
            let state: ReviewState = match &persister {
                Some(p) => p.load()?.unwrap_or_default(),
                None => ReviewState::default(),
            };
            let ids = ids_for(config.seed, state.events().len());
            let review_config = ReviewConfig {
                doc_base_url: config.doc_public_url.clone(),
                ..ReviewConfig::default()
            };
            let service =
                ReviewService::restore(config.secret.as_bytes(), clock, ids, review_config, state)?;
            service.connect(courier)?;
            Ok(review_router(ReviewApp::new(
                Arc::new(service),
                persister,
                config.test_endpoints,
            )))
        }
    }
}

/// Binds `config.port` and serves until the process ends.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    serve_on(listener, config).await
}

/// Serves on an already bound listener; `config.port` is ignored.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> Result<(), ServeError> {
    let cfg = config.clone();
    let router = tokio::task::spawn_blocking(move || build_router(&cfg))
        .await
        .expect("router construction does not panic")?;
    tracing::info!(role = %config.role, addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router).await?;
    Ok(())
}
