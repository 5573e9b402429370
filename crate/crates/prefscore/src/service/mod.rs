//! Annotation service: two-phase campaigns (pointwise, then pairwise) over
//! HTTP with an append-only event log.

pub mod campaign;
pub mod config;
pub mod http;
pub mod qc;
pub mod queue;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

pub use campaign::{Campaign, Clock, ManualClock, NextTask, Submission, SystemClock, TaskKind, TaskView};
pub use config::{CampaignConfig, CategoryConfig};

/// Serves the campaign until ctrl-c.
pub async fn serve(config: CampaignConfig, log: &Path, addr: SocketAddr) -> Result<(), String> {
    let campaign = Campaign::open(config, Some(log), Box::new(SystemClock)).map_err(|e| e.to_string())?;
    let app = http::router(Arc::new(Mutex::new(campaign)));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("bind {addr}: {e}"))?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
