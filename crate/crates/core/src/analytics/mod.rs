//! Modality blocks, token heatmaps and per-head summaries of attention planes.

pub mod blocks;
pub mod builtins;
pub mod heatmap;
pub mod summary;

pub use blocks::{all_blocks, extract_block, AttentionBlock};
pub use builtins::{builtin_metrics, BUILTIN_METRICS};
pub use heatmap::{attention_heatmap, AttentionSelection, Direction, Heatmap, HeatmapGrid};
pub use summary::{head_summary, CellError, HeadSummaryMatrix};
