//! HTTP front end for a trained planning model.
//!
//! One [`Session`] holds the model, the arm and a mutable scene. Handlers run
//! the CPU-bound work on the blocking pool; a scene edit holds the write lock,
//! and generation requests that arrive meanwhile are refused with 409 rather
//! than queued.

mod api;
mod session;

pub use api::{router, ApiError, Meta, Revalidation, SceneEdit, SceneUpdate, SweepResponse};
pub use session::{quantize, unquantize, Session, Solution, Store, FINETUNE_BUDGET, Z_GRID, Z_LIMIT};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

/// Binds `addr`, starts loading the session in the background and serves
/// until the process is stopped. Requests before the load completes get 503.
pub async fn serve<F>(addr: SocketAddr, load: F, static_dir: Option<PathBuf>) -> std::io::Result<()>
where
    F: FnOnce() -> Result<Session, String> + Send + 'static,
{
    let store = Arc::new(Store::empty());
    let loading = store.clone();
    tokio::task::spawn_blocking(move || match load() {
        Ok(s) => {
            loading.install(s);
            log::info!("session loaded");
        }
        Err(e) => log::error!("failed to load session: {e}"),
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir)).await
}
