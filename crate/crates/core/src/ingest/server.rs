//! Hosts the wire listener and the HTTP API on one background runtime.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use tokio::sync::watch;

use super::{http, serve_wire, IngestCore, IngestError};
use crate::query::{ContextRegistry, LlmAdapter, OfflineAdapter, QueryConfig, QueryEngine};
use crate::store::{Store, StoreError};

pub const DEFAULT_WIRE_ADDR: &str = "127.0.0.1:7071";
pub const DEFAULT_HTTP_ADDR: &str = "127.0.0.1:8080";

/// Store log and session state file names inside the data directory.
pub const STORE_FILE: &str = "observations.jsonl";
pub const SESSIONS_FILE: &str = "sessions.json";

pub struct CloudConfig {
    pub wire_addr: String,
    pub http_addr: String,
    /// In-memory when `None`.
    pub data_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub contexts: ContextRegistry,
    pub query: QueryConfig,
    pub adapter: Arc<dyn LlmAdapter>,
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig {
            wire_addr: DEFAULT_WIRE_ADDR.into(),
            http_addr: DEFAULT_HTTP_ADDR.into(),
            data_dir: None,
            ui_dir: None,
            contexts: ContextRegistry::new(),
            query: QueryConfig::default(),
            adapter: Arc::new(OfflineAdapter),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CloudError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("runtime: {0}")]
    Runtime(std::io::Error),
}

/// A running cloud service. Dropping the handle shuts it down.
pub struct CloudHandle {
    wire_addr: SocketAddr,
    http_addr: SocketAddr,
    ingest: Arc<IngestCore>,
    engine: QueryEngine,
    stop: watch::Sender<bool>,
    thread: Option<JoinHandle<()>>,
}

fn bind(addr: &str) -> Result<std::net::TcpListener, CloudError> {
    let l = std::net::TcpListener::bind(addr).map_err(|source| CloudError::Bind {
        addr: addr.into(),
        source,
    })?;
    l.set_nonblocking(true).map_err(CloudError::Runtime)?;
    Ok(l)
}

/// Opens the store, binds both listeners (port 0 picks a free port) and
/// starts serving on a background thread.
pub fn start(config: CloudConfig) -> Result<CloudHandle, CloudError> {
    let (store, ingest) = match &config.data_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CloudError::Ingest(IngestError::Io(e)))?;
            let store = Arc::new(Store::open(dir.join(STORE_FILE))?);
            let core = IngestCore::with_state_file(store.clone(), dir.join(SESSIONS_FILE))?;
            (store, core)
        }
        None => {
            let store = Arc::new(Store::in_memory());
            (store.clone(), IngestCore::new(store))
        }
    };
    let ingest = Arc::new(ingest);
    let engine = QueryEngine::new(store)
        .with_contexts(config.contexts)
        .with_config(config.query)
        .with_adapter(config.adapter);

    let wire = bind(&config.wire_addr)?;
    let web = bind(&config.http_addr)?;
    let wire_addr = wire.local_addr().map_err(CloudError::Runtime)?;
    let http_addr = web.local_addr().map_err(CloudError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(CloudError::Runtime)?;

    let (stop, stopped) = watch::channel(false);
    let app = http::router(engine.clone(), Some(ingest.clone()), config.ui_dir);
    let core = ingest.clone();
    let thread = std::thread::Builder::new()
        .name("icusync-cloud".into())
        .spawn(move || {
            runtime.block_on(async move {
                let wait = |mut rx: watch::Receiver<bool>| async move {
                    let _ = rx.wait_for(|v| *v).await;
                };
                let wire = match tokio::net::TcpListener::from_std(wire) {
                    Ok(l) => l,
                    Err(e) => return tracing::error!(error = %e, "wire listener"),
                };
                let web = match tokio::net::TcpListener::from_std(web) {
                    Ok(l) => l,
                    Err(e) => return tracing::error!(error = %e, "http listener"),
                };
                let http = axum::serve(web, app).with_graceful_shutdown(wait(stopped.clone()));
                let (_, served) = tokio::join!(serve_wire(wire, core, wait(stopped)), http);
                if let Err(e) = served {
                    tracing::error!(error = %e, "http server");
                }
            });
        })
        .map_err(CloudError::Runtime)?;
    tracing::info!(%wire_addr, %http_addr, "cloud service started");
    Ok(CloudHandle {
        wire_addr,
        http_addr,
        ingest,
        engine,
        stop,
        thread: Some(thread),
    })
}

impl CloudHandle {
    pub fn wire_addr(&self) -> SocketAddr {
        self.wire_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn store(&self) -> &Arc<Store> {
        self.ingest.store()
    }

    pub fn ingest(&self) -> &Arc<IngestCore> {
        &self.ingest
    }

    pub fn engine(&self) -> &QueryEngine {
        &self.engine
    }

    /// Blocks until the service stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Stops accepting connections and waits for the runtime to finish.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        let _ = self.stop.send(true);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for CloudHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}
