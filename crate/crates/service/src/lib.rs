//! HTTP/JSON service over driftlab sessions.
//!
//! Sessions live in memory behind per-session locks and, when a data
//! directory is configured, are written to `DIR/sessions/ID.json` after every
//! mutation and reloaded on start.

pub mod error;
mod openapi;
mod routes;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

use driftlab_api::PREFIX;

pub use error::ApiError;
pub use store::Store;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    /// Directory of a built browser bundle, served for every path outside the API.
    pub static_dir: Option<PathBuf>,
}

pub struct AppState {
    pub store: Store,
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> std::io::Result<Arc<AppState>> {
        Ok(Arc::new(AppState {
            store: Store::open(config.data_dir.clone())?,
        }))
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(routes::health))
        .route("/spec", get(routes::openapi))
        .route("/sessions", get(routes::list_sessions).post(routes::create_session))
        .route("/sessions/import", post(routes::import_session))
        .route("/sessions/{id}", get(routes::get_session).delete(routes::delete_session))
        .route("/sessions/{id}/config", get(routes::config))
        .route("/sessions/{id}/export", get(routes::export_session))
        .route("/sessions/{id}/stream", post(routes::stream))
        .route("/sessions/{id}/drift", get(routes::drift))
        .route("/sessions/{id}/samples", get(routes::samples))
        .route("/sessions/{id}/components", get(routes::components))
        .route("/sessions/{id}/components/merge", post(routes::merge))
        .route("/sessions/{id}/projection", get(routes::get_projection))
        .route("/sessions/{id}/projection/refresh", post(routes::refresh_projection))
        .route("/sessions/{id}/density-diff", get(routes::density_diff))
        .route("/sessions/{id}/learners", get(routes::list_learners).post(routes::create_learner))
        .route("/sessions/{id}/ensemble", get(routes::get_ensemble).put(routes::set_ensemble))
        .route("/sessions/{id}/ensemble/update", post(routes::update_ensemble))
        .route("/sessions/{id}/predict", post(routes::predict))
        .route("/sessions/{id}/performance", get(routes::performance))
        .route(
            "/sessions/{id}/samples-of-interest",
            get(routes::list_sample_sets).post(routes::add_sample_set),
        )
        .route("/sessions/{id}/samples-of-interest/{name}", get(routes::get_sample_set))
        .with_state(state);
    let app = Router::new().nest(PREFIX, api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, config).await
}

/// Serves on an already bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::open(&config)?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = ?config.data_dir, "driftlab service listening");
    axum::serve(listener, router(state, config.static_dir)).await
}
