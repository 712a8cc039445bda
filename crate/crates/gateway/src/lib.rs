//! The edgefaas gateway: a REST front end over the control plane and the
//! operator CLI that talks to it.

pub mod cli;
pub mod config;
pub mod server;

use std::sync::Arc;

use edgefaas_core::platform::ControlPlane;

/// Serves `plane` on `listener` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, plane: Arc<ControlPlane>) -> std::io::Result<()> {
    if let Some(reason) = plane.degraded() {
        tracing::warn!(%reason, "starting read-only");
    }
    axum::serve(listener, server::router(plane))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
