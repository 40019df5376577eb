//! Interpretability workbench core for vision-language transformers.
//!
//! * [`dump`]: the on-disk format for attention and hidden-state captures.
//! * [`analytics`]: modality blocks, token heatmaps and head summaries.
//! * [`metrics`]: the head-metric registry, Spearman correlation and mask alignment.
//! * [`embedding`]: token filtering, per-layer t-SNE and cross-modal neighbours.
//! * [`synth`]: synthetic dumps with planted structure.

pub mod analytics;
pub mod dump;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use dump::{read_dump, validate_dump, write_dump, CorpusManifest, Dump, ExampleRecord, Modality, TokenInfo};
pub use error::{AnalyticsError, DumpError, EmbeddingError, MetricError, SynthError};
