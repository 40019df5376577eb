use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Language,
    Vision,
}

impl Modality {
    pub fn opposite(self) -> Self {
        match self {
            Modality::Language => Modality::Vision,
            Modality::Vision => Modality::Language,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Language => "LANGUAGE",
            Modality::Vision => "VISION",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LANGUAGE" | "L" | "TEXT" => Ok(Modality::Language),
            "VISION" | "V" | "IMAGE" => Ok(Modality::Vision),
            _ => Err(format!("unknown modality {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub model_name: String,
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub example_ids: Vec<String>,
}

impl CorpusManifest {
    pub fn new(
        model_name: impl Into<String>,
        n_layers: usize,
        n_heads: usize,
        hidden_dim: usize,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_name: model_name.into(),
            n_layers,
            n_heads,
            hidden_dim,
            example_ids: Vec::new(),
        }
    }
}

/// One position of the joint vision/language sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenInfo {
    pub index: usize,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_col: Option<usize>,
    #[serde(default)]
    pub is_stopword: bool,
    #[serde(default)]
    pub is_background: bool,
    #[serde(default)]
    pub is_special: bool,
}

impl TokenInfo {
    pub fn text(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            modality: Modality::Language,
            text: Some(text.into()),
            patch_row: None,
            patch_col: None,
            is_stopword: false,
            is_background: false,
            is_special: false,
        }
    }

    pub fn special(index: usize, text: impl Into<String>) -> Self {
        Self {
            is_special: true,
            ..Self::text(index, text)
        }
    }

    pub fn patch(index: usize, row: usize, col: usize) -> Self {
        Self {
            index,
            modality: Modality::Vision,
            text: None,
            patch_row: Some(row),
            patch_col: Some(col),
            is_stopword: false,
            is_background: false,
            is_special: false,
        }
    }

    pub fn patch_coords(&self) -> Option<(usize, usize)> {
        Some((self.patch_row?, self.patch_col?))
    }
}

/// Dense f32 tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Panics if `data.len()` disagrees with `dims`.
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match dims {dims:?}"
        );
        Self { dims, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }
}

/// Binary mask stored as packed rows, MSB first, each row padded to a byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    rows: usize,
    cols: usize,
    packed: Vec<u8>,
}

impl BitMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            packed: vec![0; rows * cols.div_ceil(8)],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }

    /// Wraps an already packed payload. Fails on wrong length or set padding bits.
    pub fn from_packed(
        rows: usize,
        cols: usize,
        packed: Vec<u8>,
    ) -> Result<Self, crate::error::MaskError> {
        let stride = cols.div_ceil(8);
        if packed.len() != rows * stride {
            return Err(crate::error::MaskError::PayloadLength {
                expected: rows * stride,
                actual: packed.len(),
            });
        }
        let pad = stride * 8 - cols;
        if pad > 0 {
            let pad_mask = (1u8 << pad) - 1;
            for r in 0..rows {
                if packed[r * stride + stride - 1] & pad_mask != 0 {
                    return Err(crate::error::MaskError::Padding(r));
                }
            }
        }
        Ok(Self { rows, cols, packed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn packed(&self) -> &[u8] {
        &self.packed
    }

    fn stride(&self) -> usize {
        self.cols.div_ceil(8)
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        let byte = self.packed[r * self.stride() + c / 8];
        byte & (0x80 >> (c % 8)) != 0
    }

    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        let stride = self.stride();
        let byte = &mut self.packed[r * stride + c / 8];
        let bit = 0x80 >> (c % 8);
        if on {
            *byte |= bit;
        } else {
            *byte &= !bit;
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.packed.iter().map(|b| b.count_ones() as u64).sum()
    }
}

/// Everything captured for one input example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub id: String,
    pub tokens: Vec<TokenInfo>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Shape (n_layers, n_heads, L, L); rows are queries, columns keys.
    pub attention: Tensor,
    /// Shape (n_layers + 1, L, hidden_dim); slice 0 is the input embedding.
    pub hidden_states: Tensor,
    /// Encoded PNG, stored verbatim.
    pub image: Option<Vec<u8>>,
    /// Keyed by LANGUAGE token index.
    pub masks: BTreeMap<usize, BitMask>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ExampleRecord {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_layers(&self) -> usize {
        self.attention.dims().first().copied().unwrap_or(0)
    }

    pub fn n_heads(&self) -> usize {
        self.attention.dims().get(1).copied().unwrap_or(0)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_states.dims().get(2).copied().unwrap_or(0)
    }

    /// The L×L attention plane of one head, row-major.
    pub fn plane(&self, layer: usize, head: usize) -> &[f32] {
        let l = self.seq_len();
        let start = (layer * self.n_heads() + head) * l * l;
        &self.attention.data()[start..start + l * l]
    }

    pub fn hidden(&self, layer: usize, token: usize) -> &[f32] {
        let l = self.seq_len();
        let d = self.hidden_dim();
        let start = (layer * l + token) * d;
        &self.hidden_states.data()[start..start + d]
    }

    pub fn indices_of(&self, modality: Modality) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.modality == modality)
            .map(|(i, _)| i)
            .collect()
    }
}

/// On-disk form of `tokens.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TokensFile {
    pub id: String,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub tokens: Vec<TokenInfo>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}
