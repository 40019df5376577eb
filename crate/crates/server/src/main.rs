use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::http::HeaderValue;
use clap::Parser;
use vllens_server::{router, AppState, ServiceConfig};

/// Serve a dump over the read-only workbench API.
///
/// Every flag can also be set through its environment variable; an explicit
/// flag wins over the environment.
#[derive(Debug, Parser)]
#[command(name = "vllens-serve", version)]
struct Args {
    /// Dump directory.
    #[arg(long, env = "VLLENS_DUMP")]
    dump: PathBuf,
    #[arg(long, env = "VLLENS_BIND", default_value = "127.0.0.1:8080")]
    bind: String,
    /// Cache directory [default: <dump>/cache].
    #[arg(long, env = "VLLENS_CACHE")]
    cache: Option<PathBuf>,
    /// t-SNE seed.
    #[arg(long, env = "VLLENS_SEED", default_value_t = 0)]
    seed: u64,
    /// Stopword file, one word per line [default: built-in English list].
    #[arg(long, env = "VLLENS_STOPWORDS")]
    stopwords: Option<PathBuf>,
    /// Origin allowed by CORS [default: any].
    #[arg(long, env = "VLLENS_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let config = ServiceConfig {
        dump_path: args.dump,
        bind_address: args.bind,
        cache_dir: args.cache,
        tsne_seed: args.seed,
        stopword_file: args.stopwords,
    };
    let origin = args
        .cors_origin
        .map(|o| HeaderValue::from_str(&o).context("invalid --cors-origin"))
        .transpose()?;

    let state = Arc::new(AppState::open(&config).context("cannot start")?);
    log::info!(
        "loaded {} examples from {}",
        state.corpus().examples().len(),
        config.dump_path.display()
    );
    let listener = tokio::net::TcpListener::bind(&config.bind_address)
        .await
        .with_context(|| format!("cannot bind {}", config.bind_address))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, origin)).await?;
    Ok(())
}
