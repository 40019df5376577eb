use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::{HeaderValue, Method};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tower_http::cors::{AllowOrigin, CorsLayer};
use vllens_core::analytics::{AttentionSelection, Direction};
use vllens_core::Modality;

use crate::error::{ApiError, ErrorCode};
use crate::state::AppState;

type Shared = State<Arc<AppState>>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

/// All endpoints. `cors_origin` restricts CORS to one origin; `None` allows any.
pub fn router(state: Arc<AppState>, cors_origin: Option<HeaderValue>) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET])
        .allow_origin(cors_origin.map_or_else(AllowOrigin::any, AllowOrigin::exact));
    Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/examples/{id}", get(example))
        .route("/api/examples/{id}/head_summary", get(head_summary))
        .route("/api/examples/{id}/attention", get(attention))
        .route("/api/examples/{id}/image", get(image))
        .route("/api/embeddings", get(embeddings))
        .route("/api/nearest", get(nearest))
        .fallback(not_found)
        .layer(cors)
        .with_state(state)
}

fn json(body: impl Into<axum::body::Body>) -> Response {
    ([(CONTENT_TYPE, "application/json")], body.into()).into_response()
}

fn params(q: Params) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_parameter("query", e.body_text()))
}

fn required<'a>(p: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    p.get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_parameter(name, format!("missing required parameter {name:?}")))
}

fn index(p: &HashMap<String, String>, name: &str) -> Result<usize, ApiError> {
    let raw = required(p, name)?;
    raw.parse()
        .map_err(|_| ApiError::bad_parameter(name, format!("{name} must be a non-negative integer, got {raw:?}")))
}

fn exclude_set(p: &HashMap<String, String>) -> Result<BTreeSet<usize>, ApiError> {
    let Some(raw) = p.get("exclude") else {
        return Ok(BTreeSet::new());
    };
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| ApiError::bad_parameter("exclude", format!("exclude must list token indices, got {s:?}")))
        })
        .collect()
}

/// Runs CPU-bound work off the async executor.
async fn blocking<F>(f: F) -> Result<Response, ApiError>
where
    F: FnOnce() -> Result<Response, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn manifest(State(state): Shared) -> Response {
    json(state.manifest_body())
}

async fn example(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json(state.example_body(&id)?))
}

async fn image(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = state.image(&id)?.to_vec();
    Ok(([(CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn head_summary(State(state): Shared, Path(id): Path<String>, q: Params) -> Result<Response, ApiError> {
    let p = params(q)?;
    let metric = required(&p, "metric")?.to_string();
    let exclude = exclude_set(&p)?;
    blocking(move || {
        let body = state.summary_body(&id, &metric, &exclude)?;
        Ok(json(body.as_ref().clone()))
    })
    .await
}

async fn attention(State(state): Shared, Path(id): Path<String>, q: Params) -> Result<Response, ApiError> {
    let p = params(q)?;
    let direction = match p.get("direction") {
        Some(raw) => raw
            .parse::<Direction>()
            .map_err(|e| ApiError::bad_parameter("direction", e))?,
        None => Direction::To,
    };
    let filter = match p.get("filter").map(String::as_str) {
        None | Some("") | Some("ALL") | Some("all") => None,
        Some(raw) => Some(raw.parse::<Modality>().map_err(|e| ApiError::bad_parameter("filter", e))?),
    };
    let selection = AttentionSelection {
        layer: index(&p, "layer")?,
        head: index(&p, "head")?,
        token_index: index(&p, "token")?,
        direction,
    };
    Ok(json(state.heatmap_body(&id, selection, filter)?))
}

async fn embeddings(State(state): Shared, q: Params) -> Result<Response, ApiError> {
    let layer = index(&params(q)?, "layer")?;
    blocking(move || Ok(json(state.embeddings_body(layer)?))).await
}

async fn nearest(State(state): Shared, q: Params) -> Result<Response, ApiError> {
    let p = params(q)?;
    let example = required(&p, "example")?.to_string();
    let token = index(&p, "token")?;
    let layer = index(&p, "layer")?;
    blocking(move || Ok(json(state.nearest_body(&example, token, layer)?))).await
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError::new(ErrorCode::NotFound, format!("no route for {}", uri.path()), None)
}
