use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use fedeval_server::{router, RedbStorage, Service, SystemClock};

/// Registry server for federated benchmark evaluation.
#[derive(Parser)]
#[command(name = "fedeval-server", version)]
struct Args {
    #[arg(long, env = "FEDEVAL_BIND_ADDR", default_value = "127.0.0.1:8080")]
    bind: String,
    /// Holds registry.redb.
    #[arg(long, env = "FEDEVAL_DATA_DIR", default_value = "./fedeval-data")]
    data_dir: PathBuf,
    /// Dashboard assets; defaults to <data-dir>/static.
    #[arg(long, env = "FEDEVAL_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    /// Creates the first platform operator with this token if none exists.
    #[arg(long, env = "FEDEVAL_BOOTSTRAP_OPERATOR_TOKEN", hide_env_values = true)]
    bootstrap_operator_token: Option<String>,
}

#[tokio::main]
async fn main() {
    if let Err(e) = run(Args::parse()).await {
        eprintln!("fedeval-server: {e}");
        std::process::exit(1);
    }
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(&args.data_dir)?;
    let static_dir = args
        .static_dir
        .unwrap_or_else(|| args.data_dir.join("static"));
    std::fs::create_dir_all(&static_dir)?;

    let storage = RedbStorage::open(&args.data_dir.join("registry.redb"))?;
    let svc = Service::open(Box::new(storage), Arc::new(SystemClock))?;
    if let Some(token) = args.bootstrap_operator_token.filter(|t| !t.is_empty()) {
        if let Some(id) = svc.bootstrap_operator(&token)? {
            eprintln!("bootstrapped operator account {id}");
        }
    }

    let listener = tokio::net::TcpListener::bind(&args.bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(svc), Some(static_dir)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
