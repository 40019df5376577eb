pub mod alignment;
pub mod mask;
pub mod registry;
pub mod spearman;

pub use alignment::{person_alignment_metric, PERSON_ALIGNMENT};
pub use mask::{mask_to_patch_grid, PatchFractionGrid};
pub use registry::{HeadContext, HeadMetric, MetricDescriptor, MetricRegistry, MetricScope, MetricValue};
pub use spearman::{average_ranks, spearman};
