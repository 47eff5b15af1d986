//! HTTP facade over an OmniLingo data directory.
//!
//! Serves the catalogue and raw blocks, signed name records, server-side
//! gap-fill sessions, alignment feedback and the contribution/revocation
//! flow, plus an optional directory of static web-client files at `/`.

mod api;
mod error;

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use omnilingo::cas::{BlockStore, CachingStore, CasError, Cid, GatewayStore, LocalStore, NameError, NameRegistry};
use omnilingo::consent::{ConsentError, Keystore};

pub use api::{router, AppState};
pub use error::ApiError;

/// Which root the service hands out as its catalogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Catalogue {
    Root(Cid),
    /// Whatever the name currently points at.
    Name(String),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub gateway: Option<String>,
    pub catalogue: Catalogue,
    pub static_dir: Option<PathBuf>,
    /// Contributor identity for the consent endpoints. Defaults to the only
    /// identity in the keystore, if there is exactly one.
    pub identity: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataDirError {
    #[error("block store: {0}")]
    Store(#[from] CasError),
    #[error("name registry: {0}")]
    Names(#[from] NameError),
    #[error("keystore: {0}")]
    Keys(#[from] ConsentError),
}

/// On-disk layout shared by the service and the command line:
/// `blocks/` (one file per block), `names.jsonl` (name records) and `keys/`
/// (identities and session keys).
#[derive(Clone)]
pub struct DataDir {
    pub path: PathBuf,
    pub store: Arc<dyn BlockStore>,
    pub registry: Arc<NameRegistry>,
    pub keystore: Keystore,
}

impl DataDir {
    /// Opens or creates the directory. With a gateway, blocks missing locally
    /// are fetched from it and cached, and new blocks are also added to it.
    pub fn open(path: &Path, gateway: Option<&str>) -> Result<Self, DataDirError> {
        let local = LocalStore::open(path.join("blocks"))?;
        let store: Arc<dyn BlockStore> = match gateway {
            Some(url) => Arc::new(CachingStore::new(local, GatewayStore::new(url))),
            None => Arc::new(local),
        };
        Ok(Self {
            path: path.to_owned(),
            store,
            registry: Arc::new(NameRegistry::open(path.join("names.jsonl"))?),
            keystore: Keystore::open(path.join("keys"))?,
        })
    }
}

pub struct Server {
    listener: tokio::net::TcpListener,
    app: axum::Router,
}

impl Server {
    pub async fn bind(config: &ServiceConfig, data: DataDir) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        let state = AppState::new(data, config.catalogue.clone(), config.identity.clone());
        Ok(Self {
            listener,
            app: router(state, config.static_dir.as_deref()),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` completes, then lets in-flight requests finish.
    pub async fn run<F>(self, shutdown: F) -> std::io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut signal) => {
                signal.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}
