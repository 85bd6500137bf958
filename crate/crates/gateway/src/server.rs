//! Wiring the engine, archival client and router to a listening socket.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use softlink_core::lifecycle::LifecycleEngine;
use softlink_core::swhid::ArchivalClient;
use tokio::sync::oneshot;

use crate::api::{AppState, router};
use crate::config::{ArchivalMode, Config};
use crate::http::{HttpArchivalClient, mock_client};

/// Opens (and replays) the event log named in the configuration.
pub fn open_engine(cfg: &Config) -> Result<LifecycleEngine, String> {
    cfg.prepare_storage().map_err(|e| e.to_string())?;
    LifecycleEngine::with_system_clock(&cfg.storage.event_log, &cfg.storage.outbox, cfg.engine_config())
        .map_err(|e| e.to_string())
}

pub fn archival_client(cfg: &Config) -> Result<Arc<dyn ArchivalClient>, String> {
    Ok(match cfg.archival.mode {
        ArchivalMode::Mock => Arc::new(mock_client(&cfg.archival).map_err(|e| format!("mock origins: {e}"))?),
        ArchivalMode::Http => Arc::new(HttpArchivalClient::new(
            &cfg.archival,
            Duration::from_secs(cfg.repository.timeout_secs),
        )),
    })
}

pub fn app_state(cfg: &Config, engine: Arc<LifecycleEngine>) -> Result<Arc<AppState>, String> {
    Ok(Arc::new(AppState {
        engine,
        archival: archival_client(cfg)?,
        expose: cfg.expose_config(),
        repo_metadata_dir: cfg.server.repo_metadata_dir.clone(),
    }))
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, dashboard_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let app = router(state, dashboard_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A server running on its own thread and runtime, stopped on drop.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(state: Arc<AppState>, addr: SocketAddr, dashboard_dir: Option<PathBuf>) -> std::io::Result<Self> {
        Self::with_listener(std::net::TcpListener::bind(addr)?, state, dashboard_dir)
    }

    /// Serves on an already bound socket, so callers can learn the port
    /// before building the state.
    pub fn with_listener(
        std_listener: std::net::TcpListener,
        state: Arc<AppState>,
        dashboard_dir: Option<PathBuf>,
    ) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                let app = router(state, dashboard_dir.as_deref());
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
            })
        });
        Ok(BackgroundServer {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
