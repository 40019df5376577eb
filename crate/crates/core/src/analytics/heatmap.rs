use serde::{Deserialize, Serialize};

use super::blocks::{check_head, check_range};
use crate::dump::{ExampleRecord, Modality};
use crate::error::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Column slice: how much each query attends to the selected token.
    To,
    /// Row slice: how the selected token spreads its attention.
    From,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "to" | "to_token" => Ok(Direction::To),
            "from" | "from_token" => Ok(Direction::From),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionSelection {
    pub layer: usize,
    pub head: usize,
    pub token_index: usize,
    pub direction: Direction,
}

/// Dense patch-grid view of a vision heatmap; `None` marks grid cells with no token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub values: Vec<f64>,
    pub token_indices: Vec<usize>,
    pub grid: Option<HeatmapGrid>,
}

/// Raw attention weights between the selected token and every token passing
/// `filter` (all tokens when `None`).
pub fn attention_heatmap(
    example: &ExampleRecord,
    selection: AttentionSelection,
    filter: Option<Modality>,
) -> Result<Heatmap, AnalyticsError> {
    check_head(example, selection.layer, selection.head)?;
    let l = example.seq_len();
    check_range("token", selection.token_index, l)?;
    let plane = example.plane(selection.layer, selection.head);
    let t = selection.token_index;

    let token_indices: Vec<usize> = example
        .tokens
        .iter()
        .filter(|tok| filter.is_none_or(|m| tok.modality == m))
        .map(|tok| tok.index)
        .collect();
    let values = token_indices
        .iter()
        .map(|&i| match selection.direction {
            Direction::To => plane[i * l + t] as f64,
            Direction::From => plane[t * l + i] as f64,
        })
        .collect::<Vec<_>>();

    let grid = (filter == Some(Modality::Vision)).then(|| {
        let mut cells = vec![vec![None; example.grid_cols]; example.grid_rows];
        for (&i, &v) in token_indices.iter().zip(&values) {
            if let Some((r, c)) = example.tokens[i].patch_coords() {
                cells[r][c] = Some(v);
            }
        }
        HeatmapGrid {
            rows: example.grid_rows,
            cols: example.grid_cols,
            cells,
        }
    });

    Ok(Heatmap {
        values,
        token_indices,
        grid,
    })
}
