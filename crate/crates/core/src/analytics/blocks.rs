use ndarray::Array2;

use crate::dump::{ExampleRecord, Modality};
use crate::error::AnalyticsError;

/// One modality block of an attention plane, with the sequence positions its
/// rows (queries) and columns (keys) came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub query_indices: Vec<usize>,
    pub key_indices: Vec<usize>,
    /// Entry (i, j) is the weight query `query_indices[i]` assigns to key `key_indices[j]`.
    pub values: Array2<f32>,
}

pub(crate) fn check_range(field: &'static str, value: usize, limit: usize) -> Result<(), AnalyticsError> {
    if value < limit {
        Ok(())
    } else {
        Err(AnalyticsError::IndexOutOfRange {
            field,
            value,
            limit,
        })
    }
}

pub(crate) fn check_head(example: &ExampleRecord, layer: usize, head: usize) -> Result<(), AnalyticsError> {
    check_range("layer", layer, example.n_layers())?;
    check_range("head", head, example.n_heads())
}

/// Slices the (query_modality → key_modality) block out of attention[layer, head].
pub fn extract_block(
    example: &ExampleRecord,
    layer: usize,
    head: usize,
    query_modality: Modality,
    key_modality: Modality,
) -> Result<AttentionBlock, AnalyticsError> {
    check_head(example, layer, head)?;
    let l = example.seq_len();
    let plane = example.plane(layer, head);
    let query_indices = example.indices_of(query_modality);
    let key_indices = example.indices_of(key_modality);
    let values = Array2::from_shape_fn((query_indices.len(), key_indices.len()), |(i, j)| {
        plane[query_indices[i] * l + key_indices[j]]
    });
    Ok(AttentionBlock {
        query_indices,
        key_indices,
        values,
    })
}

/// The four blocks in the order L2L, V2V, V2L, L2V.
pub fn all_blocks(
    example: &ExampleRecord,
    layer: usize,
    head: usize,
) -> Result<[AttentionBlock; 4], AnalyticsError> {
    use Modality::{Language as L, Vision as V};
    Ok([
        extract_block(example, layer, head, L, L)?,
        extract_block(example, layer, head, V, V)?,
        extract_block(example, layer, head, V, L)?,
        extract_block(example, layer, head, L, V)?,
    ])
}
