//! Built-in head metrics: means of attention weight over modality blocks.
//!
//! All means are over entries that survive token exclusion. Rows are not
//! renormalized after exclusion.

use crate::dump::{ExampleRecord, Modality};
use crate::error::MetricError;
use crate::metrics::registry::{HeadContext, MetricDescriptor, MetricValue};

pub const MEAN_ALL: &str = "mean_all";
pub const MEAN_L2L: &str = "mean_l2l";
pub const MEAN_V2V: &str = "mean_v2v";
pub const MEAN_V2L: &str = "mean_v2l";
pub const MEAN_L2V: &str = "mean_l2v";
pub const MEAN_CROSS_MODAL: &str = "mean_cross_modal";
pub const MEAN_INTRA_MODAL: &str = "mean_intra_modal";
pub const MEAN_V2V_WITHOUT_SELF: &str = "mean_v2v_without_self";

pub const BUILTIN_METRICS: [&str; 8] = [
    MEAN_ALL,
    MEAN_L2L,
    MEAN_V2V,
    MEAN_V2L,
    MEAN_L2V,
    MEAN_CROSS_MODAL,
    MEAN_INTRA_MODAL,
    MEAN_V2V_WITHOUT_SELF,
];

pub fn builtin_metrics() -> Vec<&'static str> {
    BUILTIN_METRICS.to_vec()
}

fn mean(sum: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| sum / count as f64)
}

fn block_mean(ctx: &HeadContext<'_>, queries: &[usize], keys: &[usize]) -> Option<f64> {
    let mut sum = 0.0;
    for &q in queries {
        for &k in keys {
            sum += ctx.weight(q, k);
        }
    }
    mean(sum, queries.len() * keys.len())
}

fn modality_block(ctx: &HeadContext<'_>, query: Modality, key: Modality) -> Option<f64> {
    block_mean(ctx, &ctx.retained_of(query), &ctx.retained_of(key))
}

fn value(v: Option<f64>) -> Result<MetricValue, MetricError> {
    Ok(v.map_or(MetricValue::Degenerate, MetricValue::Value))
}

/// Two patches are neighbours when their Chebyshev distance in the grid is at most 1.
pub fn is_patch_neighbor(example: &ExampleRecord, a: usize, b: usize) -> bool {
    match (example.tokens[a].patch_coords(), example.tokens[b].patch_coords()) {
        (Some((ra, ca)), Some((rb, cb))) => ra.abs_diff(rb) <= 1 && ca.abs_diff(cb) <= 1,
        _ => false,
    }
}

fn v2v_without_self(ctx: &HeadContext<'_>) -> Option<f64> {
    let vision = ctx.retained_of(Modality::Vision);
    let mut row_sum = 0.0;
    let mut rows = 0;
    for &q in &vision {
        let mut sum = 0.0;
        let mut count = 0;
        for &k in &vision {
            if !is_patch_neighbor(ctx.example, q, k) {
                sum += ctx.weight(q, k);
                count += 1;
            }
        }
        if let Some(m) = mean(sum, count) {
            row_sum += m;
            rows += 1;
        }
    }
    mean(row_sum, rows)
}

fn pair_mean(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? + b?) / 2.0)
}

pub(crate) fn descriptors() -> Vec<MetricDescriptor> {
    use Modality::{Language as L, Vision as V};
    vec![
        MetricDescriptor::per_head(MEAN_ALL, |ctx: &HeadContext<'_>| {
            value(block_mean(ctx, ctx.retained, ctx.retained))
        }),
        MetricDescriptor::per_head(MEAN_L2L, |ctx: &HeadContext<'_>| value(modality_block(ctx, L, L))),
        MetricDescriptor::per_head(MEAN_V2V, |ctx: &HeadContext<'_>| value(modality_block(ctx, V, V))),
        MetricDescriptor::per_head(MEAN_V2L, |ctx: &HeadContext<'_>| value(modality_block(ctx, V, L))),
        MetricDescriptor::per_head(MEAN_L2V, |ctx: &HeadContext<'_>| value(modality_block(ctx, L, V))),
        MetricDescriptor::per_head(MEAN_CROSS_MODAL, |ctx: &HeadContext<'_>| {
            value(pair_mean(modality_block(ctx, V, L), modality_block(ctx, L, V)))
        }),
        MetricDescriptor::per_head(MEAN_INTRA_MODAL, |ctx: &HeadContext<'_>| {
            value(pair_mean(modality_block(ctx, V, V), modality_block(ctx, L, L)))
        }),
        MetricDescriptor::per_head(MEAN_V2V_WITHOUT_SELF, |ctx: &HeadContext<'_>| {
            value(v2v_without_self(ctx))
        }),
    ]
}
