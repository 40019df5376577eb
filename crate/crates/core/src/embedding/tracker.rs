use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::filter::{filter_tokens, StopwordList};
use super::tsne::{tsne, TsneConfig};
use crate::dump::{blob, CorpusManifest, Dump, ExampleRecord, Modality};
use crate::error::{AnalyticsError, DumpError, EmbeddingError};

/// Every example of a dump, loaded and validated.
#[derive(Debug, Clone)]
pub struct Corpus {
    manifest: CorpusManifest,
    examples: Vec<ExampleRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(manifest: CorpusManifest, examples: Vec<ExampleRecord>) -> Self {
        let by_id = examples
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        Self {
            manifest,
            examples,
            by_id,
        }
    }

    pub fn load(dump: &Dump) -> Result<Self, DumpError> {
        Ok(Self::new(dump.manifest().clone(), dump.load_all()?))
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn examples(&self) -> &[ExampleRecord] {
        &self.examples
    }

    pub fn example(&self, id: &str) -> Option<&ExampleRecord> {
        self.by_id.get(id).map(|&i| &self.examples[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenRef {
    pub example_id: String,
    pub token_index: usize,
}

impl TokenRef {
    pub fn new(example_id: impl Into<String>, token_index: usize) -> Self {
        Self {
            example_id: example_id.into(),
            token_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub example_id: String,
    pub token_index: usize,
    pub layer: usize,
    pub position: [f64; 2],
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEmbedding {
    pub layer: usize,
    pub seed: u64,
    pub points: Vec<EmbeddingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenDescriptor {
    pub example_id: String,
    pub token_index: usize,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborResult {
    pub query: TokenDescriptor,
    pub neighbor: TokenDescriptor,
    /// Cosine distance in the hidden space, in [0, 2].
    pub distance: f64,
    pub layer: usize,
}

/// 1 − cosine similarity, computed in f64. Zero vectors are treated as
/// orthogonal to everything.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Row provenance stored next to a cached embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheSidecar {
    layer: usize,
    config: TsneConfig,
    rows: Vec<CacheRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheRow {
    example_id: String,
    token_index: usize,
    modality: Modality,
}

pub fn cache_blob_path(dir: &Path, layer: usize, seed: u64) -> PathBuf {
    dir.join(format!("tsne_layer{layer}_seed{seed}.bin"))
}

pub fn cache_sidecar_path(dir: &Path, layer: usize, seed: u64) -> PathBuf {
    dir.join(format!("tsne_layer{layer}_seed{seed}.json"))
}

type LayerSlot = OnceLock<Result<Arc<LayerEmbedding>, EmbeddingError>>;

/// Token filtering, per-layer t-SNE and nearest-neighbour queries over a corpus.
///
/// Each layer is embedded at most once per tracker; concurrent callers for
/// the same layer wait for the first computation.
pub struct EmbeddingTracker {
    corpus: Arc<Corpus>,
    config: TsneConfig,
    cache_dir: Option<PathBuf>,
    retained: Vec<Vec<usize>>,
    layers: Vec<LayerSlot>,
    computations: AtomicUsize,
}

impl EmbeddingTracker {
    pub fn new(
        corpus: Arc<Corpus>,
        stopwords: &StopwordList,
        config: TsneConfig,
        cache_dir: Option<PathBuf>,
    ) -> Self {
        let retained = corpus
            .examples()
            .iter()
            .map(|e| filter_tokens(e, stopwords))
            .collect();
        let layers = (0..=corpus.manifest().n_layers).map(|_| OnceLock::new()).collect();
        Self {
            corpus,
            config,
            cache_dir,
            retained,
            layers,
            computations: AtomicUsize::new(0),
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn config(&self) -> &TsneConfig {
        &self.config
    }

    /// Number of t-SNE runs performed (cache hits excluded).
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::SeqCst)
    }

    pub fn retained(&self, example_index: usize) -> &[usize] {
        &self.retained[example_index]
    }

    fn check_layer(&self, layer: usize) -> Result<(), EmbeddingError> {
        let limit = self.corpus.manifest().n_layers + 1;
        if layer >= limit {
            return Err(AnalyticsError::IndexOutOfRange {
                field: "layer",
                value: layer,
                limit,
            }
            .into());
        }
        Ok(())
    }

    fn rows(&self) -> Vec<CacheRow> {
        self.corpus
            .examples()
            .iter()
            .zip(&self.retained)
            .flat_map(|(e, kept)| {
                kept.iter().map(move |&t| CacheRow {
                    example_id: e.id.clone(),
                    token_index: t,
                    modality: e.tokens[t].modality,
                })
            })
            .collect()
    }

    /// The corpus-wide 2-D embedding of one layer's hidden states.
    pub fn layer_embeddings(&self, layer: usize) -> Result<Arc<LayerEmbedding>, EmbeddingError> {
        self.check_layer(layer)?;
        self.layers[layer]
            .get_or_init(|| self.load_or_compute(layer).map(Arc::new))
            .clone()
    }

    fn load_or_compute(&self, layer: usize) -> Result<LayerEmbedding, EmbeddingError> {
        let rows = self.rows();
        if rows.len() < 4 {
            return Err(EmbeddingError::TooFewPoints(rows.len()));
        }
        let seed = self.config.seed;
        let sidecar = CacheSidecar {
            layer,
            config: self.config.clone(),
            rows,
        };
        let coords = match self.read_cache(&sidecar) {
            Some(coords) => coords,
            None => {
                let coords = self.compute(&sidecar.rows, layer)?;
                self.write_cache(&sidecar, &coords)?;
                coords
            }
        };
        let points = sidecar
            .rows
            .into_iter()
            .zip(coords.chunks_exact(2))
            .map(|(row, xy)| EmbeddingPoint {
                example_id: row.example_id,
                token_index: row.token_index,
                layer,
                position: [xy[0] as f64, xy[1] as f64],
                modality: row.modality,
            })
            .collect();
        Ok(LayerEmbedding {
            layer,
            seed,
            points,
        })
    }

    /// Runs t-SNE and rounds the result to f32, the precision of the cache.
    fn compute(&self, rows: &[CacheRow], layer: usize) -> Result<Vec<f32>, EmbeddingError> {
        self.computations.fetch_add(1, Ordering::SeqCst);
        let d = self.corpus.manifest().hidden_dim;
        let mut matrix = Array2::<f64>::zeros((rows.len(), d));
        for (r, row) in rows.iter().enumerate() {
            let example = self
                .corpus
                .example(&row.example_id)
                .expect("rows come from the corpus");
            for (dst, &v) in matrix.row_mut(r).iter_mut().zip(example.hidden(layer, row.token_index)) {
                *dst = v as f64;
            }
        }
        let out = tsne(matrix.view(), &self.config)?;
        Ok(out.embedding.iter().map(|&v| v as f32).collect())
    }

    fn read_cache(&self, expected: &CacheSidecar) -> Option<Vec<f32>> {
        let dir = self.cache_dir.as_ref()?;
        let seed = self.config.seed;
        let sidecar: CacheSidecar =
            serde_json::from_slice(&std::fs::read(cache_sidecar_path(dir, expected.layer, seed)).ok()?).ok()?;
        if &sidecar != expected {
            log::info!("stale t-SNE cache for layer {}; recomputing", expected.layer);
            return None;
        }
        let bytes = std::fs::read(cache_blob_path(dir, expected.layer, seed)).ok()?;
        let (dims, data) = blob::decode_f32(&bytes).ok()?;
        (dims == [expected.rows.len(), 2]).then_some(data)
    }

    fn write_cache(&self, sidecar: &CacheSidecar, coords: &[f32]) -> Result<(), EmbeddingError> {
        let Some(dir) = &self.cache_dir else {
            return Ok(());
        };
        let seed = self.config.seed;
        let io_err = |path: &Path, e: std::io::Error| EmbeddingError::Cache {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let blob_path = cache_blob_path(dir, sidecar.layer, seed);
        std::fs::write(&blob_path, blob::encode_f32(&[sidecar.rows.len(), 2], coords))
            .map_err(|e| io_err(&blob_path, e))?;
        let json_path = cache_sidecar_path(dir, sidecar.layer, seed);
        let mut json = serde_json::to_vec_pretty(sidecar).expect("sidecar serializes");
        json.push(b'\n');
        std::fs::write(&json_path, json).map_err(|e| io_err(&json_path, e))
    }

    /// Closest retained token of the other modality, over the whole corpus, by
    /// cosine distance between hidden states at `layer`. Ties go to the
    /// smallest (example_id, token_index).
    pub fn nearest_cross_modal(&self, query: &TokenRef, layer: usize) -> Result<NeighborResult, EmbeddingError> {
        self.check_layer(layer)?;
        let corpus = &self.corpus;
        let qi = corpus
            .examples()
            .iter()
            .position(|e| e.id == query.example_id)
            .ok_or_else(|| EmbeddingError::UnknownExample(query.example_id.clone()))?;
        let q_example = &corpus.examples()[qi];
        if query.token_index >= q_example.seq_len() {
            return Err(AnalyticsError::IndexOutOfRange {
                field: "token",
                value: query.token_index,
                limit: q_example.seq_len(),
            }
            .into());
        }
        if !self.retained[qi].contains(&query.token_index) {
            return Err(EmbeddingError::FilteredQuery {
                example_id: query.example_id.clone(),
                token_index: query.token_index,
            });
        }
        let q_modality = q_example.tokens[query.token_index].modality;
        let q_vec = q_example.hidden(layer, query.token_index);
        let want = q_modality.opposite();

        let mut best: Option<(f64, &str, usize)> = None;
        for (example, kept) in corpus.examples().iter().zip(&self.retained) {
            for &t in kept {
                if example.tokens[t].modality != want {
                    continue;
                }
                let d = cosine_distance(q_vec, example.hidden(layer, t));
                let better = match best {
                    None => true,
                    Some((bd, bid, bt)) => d < bd || (d == bd && (example.id.as_str(), t) < (bid, bt)),
                };
                if better {
                    best = Some((d, example.id.as_str(), t));
                }
            }
        }
        let (distance, id, t) = best.ok_or(EmbeddingError::EmptyPool)?;
        Ok(NeighborResult {
            query: TokenDescriptor {
                example_id: query.example_id.clone(),
                token_index: query.token_index,
                modality: q_modality,
            },
            neighbor: TokenDescriptor {
                example_id: id.to_string(),
                token_index: t,
                modality: want,
            },
            distance,
            layer,
        })
    }
}
