//! JSON API over the diversification strategies.
//!
//! Routes:
//! - `GET  /api/universe`
//! - `PUT  /api/dataset` (body: scenario document)
//! - `GET  /api/frontier`
//! - `POST /api/solve/baseline`, `/api/solve/penalty`, `/api/solve/constrained`

mod api;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post, put};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

pub use api::{
    AssetSummary, BaselineBody, ConstrainedBody, ConstrainedResponse, FrontierQuery, PenaltyBody, Universe,
};
pub use state::{AppState, Dataset, ServerConfig};

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/universe", get(api::universe))
        .route("/api/dataset", put(api::load_dataset))
        .route("/api/frontier", get(api::frontier))
        .route("/api/solve/baseline", post(api::solve_baseline))
        .route("/api/solve/penalty", post(api::solve_penalty))
        .route("/api/solve/constrained", post(api::solve_constrained))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
