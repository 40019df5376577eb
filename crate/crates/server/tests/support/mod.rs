#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;
use vllens_server::{router, AppState, ServiceConfig};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn reference_dump() -> PathBuf {
    fixture_dir().join("reference_dump")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// State over `dump` with a private cache so tests never share computations.
pub fn open(dump: &Path, cache: &Path) -> Arc<AppState> {
    Arc::new(AppState::open(&ServiceConfig::new(dump).with_cache_dir(cache)).unwrap())
}

pub fn app(state: &Arc<AppState>) -> Router {
    router(state.clone(), None)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    let res = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

/// (golden file name, request, expected status) for the reference dump.
pub fn golden_cases() -> Vec<(String, String, u16)> {
    let mut cases: Vec<(String, String, u16)> = vec![
        ("manifest".into(), "/api/manifest".into(), 200),
        ("example_ex0000".into(), "/api/examples/ex0000".into(), 200),
        ("example_ex0001".into(), "/api/examples/ex0001".into(), 200),
    ];
    for metric in vllens_core::metrics::MetricRegistry::standard().names() {
        cases.push((
            format!("summary_ex0000_{metric}"),
            format!("/api/examples/ex0000/head_summary?metric={metric}"),
            200,
        ));
    }
    let more: [(&str, &str, u16); 23] = [
        ("summary_ex0001_alignment_excluding_specials", "/api/examples/ex0001/head_summary?metric=spearman_person_alignment&exclude=0,6", 200),
        ("summary_ex0002_mean_all_excluding_patches", "/api/examples/ex0002/head_summary?metric=mean_all&exclude=7,8,9", 200),
        ("attention_to_person_vision", "/api/examples/ex0000/attention?layer=2&head=1&token=2&direction=to&filter=VISION", 200),
        ("attention_to_language", "/api/examples/ex0000/attention?layer=0&head=0&token=3&direction=to&filter=LANGUAGE", 200),
        ("attention_from_patch_all", "/api/examples/ex0001/attention?layer=1&head=0&token=9&direction=from", 200),
        ("attention_from_vision", "/api/examples/ex0002/attention?layer=2&head=0&token=4&direction=from&filter=VISION", 200),
        ("embeddings_layer0", "/api/embeddings?layer=0", 200),
        ("embeddings_layer1", "/api/embeddings?layer=1", 200),
        ("embeddings_layer2", "/api/embeddings?layer=2", 200),
        ("embeddings_layer3", "/api/embeddings?layer=3", 200),
        ("nearest_twin", "/api/nearest?example=ex0001&token=4&layer=3", 200),
        ("nearest_patch_layer0", "/api/nearest?example=ex0000&token=10&layer=0", 200),
        ("error_unknown_example", "/api/examples/nope", 404),
        ("error_unknown_metric", "/api/examples/ex0000/head_summary?metric=nope", 400),
        ("error_missing_metric", "/api/examples/ex0000/head_summary", 400),
        ("error_exclude_out_of_range", "/api/examples/ex0000/head_summary?metric=mean_all&exclude=99", 400),
        ("error_layer_out_of_range", "/api/examples/ex0000/attention?layer=9&head=0&token=0", 400),
        ("error_not_an_integer", "/api/examples/ex0000/attention?layer=x&head=0&token=0", 400),
        ("error_bad_direction", "/api/examples/ex0000/attention?layer=0&head=0&token=0&direction=sideways", 400),
        ("error_embedding_layer", "/api/embeddings?layer=4", 400),
        ("error_filtered_query", "/api/nearest?example=ex0001&token=1&layer=0", 400),
        ("error_nearest_unknown_example", "/api/nearest?example=zzz&token=0&layer=0", 404),
        ("error_no_route", "/api/nothing", 404),
    ];
    cases.extend(more.iter().map(|&(n, u, s)| (n.to_string(), u.to_string(), s)));
    cases
}

/// Runs every golden case against a fresh state over the reference dump and
/// returns one line per mismatch. With `update`, rewrites the golden files.
pub async fn run_golden_suite(update: bool) -> Vec<String> {
    let cache = tempfile::tempdir().unwrap();
    let state = open(&reference_dump(), cache.path());
    let app = app(&state);
    let mut mismatches = Vec::new();
    for (name, uri, status) in golden_cases() {
        let reply = get(&app, &uri).await;
        if reply.status.as_u16() != status {
            mismatches.push(format!("{name}: status {} != {status}", reply.status));
        }
        let path = golden_dir().join(format!("{name}.json"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &reply.body).unwrap();
            continue;
        }
        match std::fs::read(&path) {
            Ok(want) if want == reply.body => {}
            Ok(_) => mismatches.push(format!("{name}: body differs from {}", path.display())),
            Err(e) => mismatches.push(format!("{name}: {e}")),
        }
    }
    mismatches
}

/// Fires `n` identical requests at once on a fresh state; returns the bodies
/// and the number of summary and t-SNE computations observed.
pub async fn concurrent_identical(uri: &str, n: usize) -> (Vec<Vec<u8>>, usize, usize) {
    let cache = tempfile::tempdir().unwrap();
    let state = open(&reference_dump(), cache.path());
    let app = app(&state);
    let barrier = Arc::new(tokio::sync::Barrier::new(n));
    let tasks: Vec<_> = (0..n)
        .map(|_| {
            let (app, barrier, uri) = (app.clone(), barrier.clone(), uri.to_string());
            tokio::spawn(async move {
                barrier.wait().await;
                let reply = get(&app, &uri).await;
                assert_eq!(reply.status, StatusCode::OK);
                reply.body
            })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        bodies.push(t.await.unwrap());
    }
    (bodies, state.summary_computations(), state.embedding_computations())
}
