use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use dashmap::DashMap;
use serde::Serialize;
use thiserror::Error;
use vllens_core::analytics::{attention_heatmap, head_summary, AttentionSelection, Direction, HeadSummaryMatrix};
use vllens_core::embedding::{Corpus, EmbeddingTracker, StopwordList, TokenRef, TsneConfig};
use vllens_core::metrics::MetricRegistry;
use vllens_core::{read_dump, validate_dump, DumpError, ExampleRecord, Modality, TokenInfo};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ErrorCode};
use crate::json::to_body;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("dump at {path} failed validation ({failures} failing entries): {first}")]
    Invalid { path: PathBuf, failures: usize, first: String },
    #[error("cache directory {path} is not writable: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
    #[error("cannot read stopword file {path}: {source}")]
    Stopwords { path: PathBuf, source: std::io::Error },
}

type Body = Arc<Vec<u8>>;
type SummaryKey = (String, String, Vec<usize>);
type SummarySlot = Arc<OnceLock<Result<Body, ApiError>>>;

/// Location of a persisted head summary.
pub fn summary_cache_path(cache_dir: &Path, example_id: &str, metric: &str, exclude: &BTreeSet<usize>) -> PathBuf {
    let mut name = metric.to_string();
    if !exclude.is_empty() {
        let list: Vec<String> = exclude.iter().map(usize::to_string).collect();
        name.push_str("__ex_");
        name.push_str(&list.join("-"));
    }
    name.push_str(".json");
    cache_dir.join("summary").join(example_id).join(name)
}

#[derive(Serialize)]
struct ManifestResponse<'a> {
    format_version: u32,
    model_name: &'a str,
    n_layers: usize,
    n_heads: usize,
    hidden_dim: usize,
    example_ids: &'a [String],
    metrics: Vec<String>,
}

#[derive(Serialize)]
struct ExampleResponse<'a> {
    id: &'a str,
    seq_len: usize,
    grid_rows: usize,
    grid_cols: usize,
    tokens: &'a [TokenInfo],
    metadata: &'a std::collections::BTreeMap<String, serde_json::Value>,
    image_url: Option<String>,
    mask_token_indices: Vec<usize>,
}

#[derive(Serialize)]
struct SummaryResponse<'a> {
    example_id: &'a str,
    exclude: Vec<usize>,
    #[serde(flatten)]
    summary: &'a HeadSummaryMatrix,
}

#[derive(Serialize)]
struct HeatmapResponse<'a> {
    example_id: &'a str,
    layer: usize,
    head: usize,
    token: usize,
    direction: Direction,
    filter: Option<Modality>,
    #[serde(flatten)]
    heatmap: vllens_core::analytics::Heatmap,
}

#[derive(Serialize)]
struct NearestResponse {
    space: &'static str,
    metric: &'static str,
    #[serde(flatten)]
    result: vllens_core::embedding::NeighborResult,
}

/// Everything a request handler needs. The corpus is immutable; only the
/// caches change after construction.
pub struct AppState {
    corpus: Arc<Corpus>,
    registry: MetricRegistry,
    tracker: EmbeddingTracker,
    cache_dir: PathBuf,
    summaries: DashMap<SummaryKey, SummarySlot>,
    summary_computations: AtomicUsize,
}

impl AppState {
    /// Validates the dump, loads every example and checks the cache directory.
    pub fn open(config: &ServiceConfig) -> Result<Self, StartupError> {
        let report = validate_dump(&config.dump_path)?;
        if !report.is_ok() {
            let first = report
                .manifest_failures
                .first()
                .map(|f| format!("manifest: {}", f.message))
                .or_else(|| {
                    report
                        .examples
                        .iter()
                        .find(|e| !e.passed)
                        .map(|e| format!("{}: {}", e.example_id, e.failures[0].message))
                })
                .unwrap_or_default();
            return Err(StartupError::Invalid {
                path: config.dump_path.clone(),
                failures: report.failure_count(),
                first,
            });
        }
        let corpus = Corpus::load(&read_dump(&config.dump_path)?)?;
        let stopwords = match &config.stopword_file {
            Some(path) => StopwordList::from_file(path).map_err(|source| StartupError::Stopwords {
                path: path.clone(),
                source,
            })?,
            None => StopwordList::default(),
        };
        Self::from_corpus(corpus, &stopwords, config.tsne_seed, config.resolved_cache_dir())
    }

    pub fn from_corpus(
        corpus: Corpus,
        stopwords: &StopwordList,
        seed: u64,
        cache_dir: PathBuf,
    ) -> Result<Self, StartupError> {
        check_writable(&cache_dir)?;
        let corpus = Arc::new(corpus);
        let tracker = EmbeddingTracker::new(
            corpus.clone(),
            stopwords,
            TsneConfig::with_seed(seed),
            Some(cache_dir.clone()),
        );
        Ok(Self {
            corpus,
            registry: MetricRegistry::standard(),
            tracker,
            cache_dir,
            summaries: DashMap::new(),
            summary_computations: AtomicUsize::new(0),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn registry(&self) -> &MetricRegistry {
        &self.registry
    }

    pub fn tracker(&self) -> &EmbeddingTracker {
        &self.tracker
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    /// Head summaries computed so far (disk and memory cache hits excluded).
    pub fn summary_computations(&self) -> usize {
        self.summary_computations.load(Ordering::SeqCst)
    }

    /// t-SNE runs performed so far.
    pub fn embedding_computations(&self) -> usize {
        self.tracker.computations()
    }

    fn example(&self, id: &str) -> Result<&ExampleRecord, ApiError> {
        self.corpus.example(id).ok_or_else(|| ApiError::unknown_example(id))
    }

    pub fn manifest_body(&self) -> Vec<u8> {
        let m = self.corpus.manifest();
        to_body(&ManifestResponse {
            format_version: m.format_version,
            model_name: &m.model_name,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            hidden_dim: m.hidden_dim,
            example_ids: &m.example_ids,
            metrics: self.registry.names(),
        })
    }

    pub fn example_body(&self, id: &str) -> Result<Vec<u8>, ApiError> {
        let ex = self.example(id)?;
        Ok(to_body(&ExampleResponse {
            id: &ex.id,
            seq_len: ex.seq_len(),
            grid_rows: ex.grid_rows,
            grid_cols: ex.grid_cols,
            tokens: &ex.tokens,
            metadata: &ex.metadata,
            image_url: ex.image.as_ref().map(|_| format!("/api/examples/{}/image", ex.id)),
            mask_token_indices: ex.masks.keys().copied().collect(),
        }))
    }

    pub fn image(&self, id: &str) -> Result<&[u8], ApiError> {
        self.example(id)?
            .image
            .as_deref()
            .ok_or_else(|| ApiError::new(ErrorCode::NoImage, format!("example {id:?} has no image"), Some("id")))
    }

    fn check_summary_request(&self, id: &str, metric: &str, exclude: &BTreeSet<usize>) -> Result<(), ApiError> {
        let ex = self.example(id)?;
        if self.registry.get(metric).is_none() {
            return Err(ApiError::new(
                ErrorCode::UnknownMetric,
                format!("unknown metric {metric:?}"),
                Some("metric"),
            ));
        }
        if let Some(&bad) = exclude.iter().next_back().filter(|&&i| i >= ex.seq_len()) {
            return Err(ApiError::new(
                ErrorCode::IndexOutOfRange,
                format!("exclude = {bad} out of range (limit {})", ex.seq_len()),
                Some("exclude"),
            ));
        }
        Ok(())
    }

    fn compute_summary(&self, id: &str, metric: &str, exclude: &BTreeSet<usize>) -> Result<Vec<u8>, ApiError> {
        self.summary_computations.fetch_add(1, Ordering::SeqCst);
        let ex = self.example(id)?;
        let summary = head_summary(ex, &self.registry, metric, exclude)?;
        Ok(to_body(&SummaryResponse {
            example_id: &ex.id,
            exclude: exclude.iter().copied().collect(),
            summary: &summary,
        }))
    }

    /// The head-summary response body. Computed at most once per
    /// (example, metric, exclude) and persisted; concurrent callers share the
    /// first computation.
    pub fn summary_body(&self, id: &str, metric: &str, exclude: &BTreeSet<usize>) -> Result<Body, ApiError> {
        self.check_summary_request(id, metric, exclude)?;
        let key = (id.to_string(), metric.to_string(), exclude.iter().copied().collect());
        let slot = self.summaries.entry(key).or_default().clone();
        slot.get_or_init(|| {
            let path = summary_cache_path(&self.cache_dir, id, metric, exclude);
            if let Some(bytes) = read_cached_json(&path) {
                return Ok(Arc::new(bytes));
            }
            let body = self.compute_summary(id, metric, exclude)?;
            if let Err(e) = write_atomic(&path, &body) {
                log::warn!("cannot persist {}: {e}", path.display());
            }
            Ok(Arc::new(body))
        })
        .clone()
    }

    /// Recomputes a summary and overwrites its cache file, ignoring any
    /// cached copy.
    pub fn refresh_summary(&self, id: &str, metric: &str, exclude: &BTreeSet<usize>) -> Result<PathBuf, ApiError> {
        self.check_summary_request(id, metric, exclude)?;
        let body = self.compute_summary(id, metric, exclude)?;
        let path = summary_cache_path(&self.cache_dir, id, metric, exclude);
        write_atomic(&path, &body).map_err(|e| ApiError::internal(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn heatmap_body(
        &self,
        id: &str,
        selection: AttentionSelection,
        filter: Option<Modality>,
    ) -> Result<Vec<u8>, ApiError> {
        let ex = self.example(id)?;
        let heatmap = attention_heatmap(ex, selection, filter)?;
        Ok(to_body(&HeatmapResponse {
            example_id: &ex.id,
            layer: selection.layer,
            head: selection.head,
            token: selection.token_index,
            direction: selection.direction,
            filter,
            heatmap,
        }))
    }

    pub fn embeddings_body(&self, layer: usize) -> Result<Vec<u8>, ApiError> {
        let embedding = self.tracker.layer_embeddings(layer)?;
        Ok(to_body(&*embedding))
    }

    pub fn nearest_body(&self, example: &str, token: usize, layer: usize) -> Result<Vec<u8>, ApiError> {
        let result = self.tracker.nearest_cross_modal(&TokenRef::new(example, token), layer)?;
        Ok(to_body(&NearestResponse {
            space: "hidden",
            metric: "cosine",
            result,
        }))
    }
}

fn check_writable(dir: &Path) -> Result<(), StartupError> {
    let err = |source| StartupError::Cache {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(format!(".write_probe_{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)
}

fn read_cached_json(path: &Path) -> Option<Vec<u8>> {
    let bytes = std::fs::read(path).ok()?;
    match serde_json::from_slice::<serde_json::Value>(&bytes) {
        Ok(_) => Some(bytes),
        Err(e) => {
            log::warn!("ignoring unreadable cache file {}: {e}", path.display());
            None
        }
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("cache paths have a parent");
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
