//! HTTP service: health, emotion analysis, reflection and voice chat,
//! session records, review reports and reply-audio media.

pub mod api;
pub mod config;
pub mod error;
pub mod state;

use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use config::ServerConfig;
pub use error::{ApiError, ErrorCode};
pub use state::{AppState, StartupError};

/// A bound, running service.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    handle: JoinHandle<std::io::Result<()>>,
    sweeper: JoinHandle<()>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Waits until the server stops.
    pub async fn wait(self) -> std::io::Result<()> {
        let result = self.handle.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        self.sweeper.abort();
        result
    }

    pub fn abort(&self) {
        self.handle.abort();
        self.sweeper.abort();
    }
}

/// Binds the configured address and starts serving in the background.
pub async fn start(config: &ServerConfig) -> Result<RunningServer, StartupError> {
    let state = Arc::new(AppState::from_config(config)?);
    // Reply audio left over from a previous run.
    state.media.sweep();
    let listener = TcpListener::bind((config.host.as_str(), config.port)).await?;
    let addr = listener.local_addr()?;
    let app = api::router(state.clone(), &config.cors_origins);
    let handle = tokio::spawn(async move {
        axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await
    });
    let sweeper = tokio::spawn(sweep_loop(state.clone(), Duration::from_secs(config.sweep_interval_secs)));
    Ok(RunningServer { addr, state, handle, sweeper })
}

/// Starts the service, announces the address on stdout, and runs until
/// interrupted.
pub async fn serve(config: &ServerConfig) -> Result<(), StartupError> {
    let server = start(config).await?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "listening on {}", server.url())?;
    stdout.flush()?;
    server.wait().await?;
    Ok(())
}

async fn sweep_loop(state: Arc<AppState>, every: Duration) {
    let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + every, every);
    loop {
        ticker.tick().await;
        let state = state.clone();
        let result = tokio::task::spawn_blocking(move || state.media.sweep()).await;
        if let Ok(report) = result {
            if report.removed > 0 {
                tracing::info!(removed = report.removed, "expired reply audio removed");
            }
        }
    }
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}
