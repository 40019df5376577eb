//! Mask alignment: does a head's vision-to-token attention follow the token's
//! segmentation mask?
//!
//! For each retained LANGUAGE token with a stored mask, the mask is reduced to
//! patch fractions and compared (Spearman) with the attention every retained
//! vision token pays to that word. The head's score is the mean over words.

use super::mask::mask_to_patch_grid;
use super::registry::{HeadContext, MetricDescriptor, MetricValue};
use super::spearman::spearman;
use crate::dump::{ExampleRecord, Modality};
use crate::error::MetricError;

pub const PERSON_ALIGNMENT: &str = "spearman_person_alignment";

pub(crate) fn descriptor() -> MetricDescriptor {
    MetricDescriptor::per_head(PERSON_ALIGNMENT, |ctx: &HeadContext<'_>| alignment(ctx))
}

/// Correlation for every masked token in the context, `None` where Spearman was undefined.
pub fn alignment_per_token(ctx: &HeadContext<'_>) -> Result<Vec<(usize, Option<f64>)>, MetricError> {
    let example = ctx.example;
    let vision = ctx.retained_of(Modality::Vision);
    let mut out = Vec::new();
    for (&token, mask) in &example.masks {
        if !ctx.retained.contains(&token) || example.tokens[token].modality != Modality::Language {
            continue;
        }
        let grid = mask_to_patch_grid(mask, example.grid_rows, example.grid_cols)
            .map_err(|e| MetricError(format!("mask for token {token}: {e}")))?;
        let mut fractions = Vec::with_capacity(vision.len());
        let mut attention = Vec::with_capacity(vision.len());
        for &v in &vision {
            let (r, c) = example.tokens[v]
                .patch_coords()
                .expect("vision tokens carry patch coordinates");
            fractions.push(grid.get(r, c));
            attention.push(ctx.weight(v, token));
        }
        match spearman(&fractions, &attention) {
            Ok(rho) => out.push((token, Some(rho))),
            Err(e) => {
                log::debug!(
                    "{}: token {token} skipped at layer {} head {}: {e}",
                    example.id,
                    ctx.layer,
                    ctx.head
                );
                out.push((token, None));
            }
        }
    }
    Ok(out)
}

fn alignment(ctx: &HeadContext<'_>) -> Result<MetricValue, MetricError> {
    let scores: Vec<f64> = alignment_per_token(ctx)?
        .into_iter()
        .filter_map(|(_, rho)| rho)
        .collect();
    if scores.is_empty() {
        return Ok(MetricValue::Degenerate);
    }
    Ok(MetricValue::Value(scores.iter().sum::<f64>() / scores.len() as f64))
}

/// Alignment score of one head over all tokens of the example.
pub fn person_alignment_metric(
    example: &ExampleRecord,
    layer: usize,
    head: usize,
) -> Result<MetricValue, MetricError> {
    let retained: Vec<usize> = (0..example.seq_len()).collect();
    alignment(&HeadContext {
        example,
        layer,
        head,
        retained: &retained,
    })
}
