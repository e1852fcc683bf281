//! Review service: a small authenticated HTTP API over a dialogue corpus.
//!
//! Reviewers page through the queue, accept, edit, reject or relabel
//! templates, submit questionnaire ratings and start background generation
//! jobs. Writes are serialized through [`store::Store`]'s journal and guarded
//! by per-template revision numbers.

pub mod api;
pub mod error;
pub mod jobs;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use gagne_core::gateway::Gateway;
use parking_lot::RwLock;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::{router, AppState};
pub use error::{ApiError, ServiceError};
pub use jobs::GenerationSettings;
pub use store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub bind: SocketAddr,
    pub token: String,
    pub generation: GenerationSettings,
}

/// A service bound to its port and serving in the background.
pub struct RunningService {
    addr: SocketAddr,
    store: Arc<RwLock<Store>>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn store(&self) -> Arc<RwLock<Store>> {
        self.store.clone()
    }

    /// Stop immediately without compacting, as a crash would.
    pub fn abort(self) {
        self.task.abort();
    }

    /// Stop accepting requests, drain in-flight ones and compact the journal.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let served = (&mut self.task).await.map_err(|e| ServiceError::Config(format!("server task failed: {e}")))?;
        served.map_err(|source| ServiceError::Io { path: PathBuf::from(self.addr.to_string()), source })?;
        self.store.write().compact()
    }
}

/// Open the corpus, bind and start serving.
pub async fn start(config: ServiceConfig, gateway: Gateway) -> Result<RunningService, ServiceError> {
    if config.token.trim().is_empty() {
        return Err(ServiceError::Config("an API token is required".into()));
    }
    let store = Store::open(&config.corpus)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServiceError::PortInUse(config.bind),
        _ => ServiceError::Io { path: PathBuf::from(config.bind.to_string()), source: e },
    })?;
    let addr = listener.local_addr().map_err(|source| ServiceError::Io { path: PathBuf::from(config.bind.to_string()), source })?;
    let state = AppState::new(store, gateway, config.generation, config.token.trim());
    let store = state.store.clone();
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(state);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(RunningService { addr, store, stop: Some(stop), task })
}

/// Serve until Ctrl-C, then compact and return.
pub async fn serve_until_interrupted(config: ServiceConfig, gateway: Gateway) -> Result<(), ServiceError> {
    let running = start(config, gateway).await?;
    log::info!("listening on http://{}", running.addr());
    let _ = tokio::signal::ctrl_c().await;
    log::info!("shutting down");
    running.shutdown().await
}
