//! Read-only HTTP API over an ingested dump.
//!
//! [`AppState::open`] validates and loads the corpus once; [`router`] serves
//! it. Head summaries and per-layer embeddings are computed at most once per
//! key and persisted under the cache directory.

mod config;
mod error;
mod json;
mod routes;
mod state;

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorCode};
pub use json::{round_floats, to_body};
pub use routes::router;
pub use state::{summary_cache_path, AppState, StartupError};
