//! Hidden-state tracking: token filtering, per-layer t-SNE, cross-modal neighbours.

pub mod filter;
pub mod tracker;
pub mod tsne;

pub use filter::{filter_tokens, StopwordList};
pub use tracker::{
    cache_blob_path, cache_sidecar_path, cosine_distance, Corpus, EmbeddingPoint, EmbeddingTracker, LayerEmbedding, NeighborResult,
    TokenDescriptor, TokenRef,
};
pub use tsne::{joint_probabilities, tsne, JointProbabilities, TsneConfig, TsneOutput};
