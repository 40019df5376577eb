//! Small record builders shared by unit tests.

use std::collections::BTreeMap;

use crate::dump::{ExampleRecord, Modality, Tensor, TokenInfo};

/// Grid wide enough for `n_vision` patches, filled row-major.
pub(crate) fn grid_for(n_vision: usize) -> (usize, usize) {
    let cols = ((n_vision as f64).sqrt().ceil() as usize).max(1);
    let rows = n_vision.div_ceil(cols).max(1);
    (rows, cols)
}

pub(crate) fn tokens_for(modalities: &[Modality]) -> (Vec<TokenInfo>, usize, usize) {
    let n_vision = modalities.iter().filter(|&&m| m == Modality::Vision).count();
    let (rows, cols) = grid_for(n_vision);
    let mut patch = 0;
    let tokens = modalities
        .iter()
        .enumerate()
        .map(|(i, m)| match m {
            Modality::Language => TokenInfo::text(i, format!("w{i}")),
            Modality::Vision => {
                let t = TokenInfo::patch(i, patch / cols, patch % cols);
                patch += 1;
                t
            }
        })
        .collect();
    (tokens, rows, cols)
}

/// One layer, one head, hidden_dim 1.
pub(crate) fn example_with_plane(modalities: &[Modality], plane: &[f32]) -> ExampleRecord {
    example_with_planes(modalities, 1, 1, plane.to_vec())
}

pub(crate) fn example_with_planes(
    modalities: &[Modality],
    n_layers: usize,
    n_heads: usize,
    attention: Vec<f32>,
) -> ExampleRecord {
    let l = modalities.len();
    let (tokens, grid_rows, grid_cols) = tokens_for(modalities);
    ExampleRecord {
        id: "ex".into(),
        tokens,
        grid_rows,
        grid_cols,
        attention: Tensor::new(vec![n_layers, n_heads, l, l], attention),
        hidden_states: Tensor::zeros(vec![n_layers + 1, l, 1]),
        image: None,
        masks: BTreeMap::new(),
        metadata: BTreeMap::new(),
    }
}
