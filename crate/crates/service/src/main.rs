use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use sitebias_core::grid::{GridConfig, AUTHALIC_RADIUS_KM, DEFAULT_CELL_AREA_KM2};
use sitebias_service::{router, AppState};

/// Serve representativeness analyses over HTTP.
#[derive(Debug, Parser)]
#[command(name = "sitebias-server", version)]
struct Args {
    /// Directory holding the catalog, collections and analyses.
    #[arg(long, env = "SITEBIAS_DATA", default_value = "data")]
    data_dir: PathBuf,

    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,

    /// Sphere radius for a new catalog, km.
    #[arg(long, default_value_t = AUTHALIC_RADIUS_KM)]
    radius_km: f64,

    /// Target cell area for a new catalog, km².
    #[arg(long, default_value_t = DEFAULT_CELL_AREA_KM2)]
    cell_area_km2: f64,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_target(false).init();
    let args = Args::parse();
    let state = AppState::open(&args.data_dir, GridConfig::new(args.radius_km, args.cell_area_km2))
        .with_context(|| format!("opening data directory {}", args.data_dir.display()))?;
    tracing::info!(
        cells = state.grid().total_cells(),
        data_dir = %args.data_dir.display(),
        "grid ready"
    );
    let resumed = state.resume_unfinished()?;
    if resumed > 0 {
        tracing::info!(resumed, "rescheduled unfinished analyses");
    }
    let listener = tokio::net::TcpListener::bind(args.addr)
        .await
        .with_context(|| format!("binding {}", args.addr))?;
    tracing::info!(addr = %args.addr, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
