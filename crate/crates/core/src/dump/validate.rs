//! Invariant checks over manifests and example records.
//!
//! Checks never stop at the first problem: every function returns the full
//! list of violations so that `validate_dump` can produce an exhaustive report.
//! Repeated failures of the same check within one tensor are collapsed into a
//! single violation that reports the first offender and a count.

use std::collections::HashSet;

use serde::Serialize;

use super::types::{CorpusManifest, ExampleRecord, Modality, FORMAT_VERSION};
use crate::error::Check;

/// Maximum deviation of an attention row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: Check,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(check: Check, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            check,
            field: field.into(),
            message: message.into(),
        }
    }
}

/// True if `id` can name a directory under `examples/`.
pub fn is_safe_example_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\', '\0'])
        && !id.starts_with('.')
}

pub fn check_manifest(manifest: &CorpusManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.format_version != FORMAT_VERSION {
        out.push(Violation::new(
            Check::Manifest,
            "format_version",
            format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    for (name, v) in [
        ("n_layers", manifest.n_layers),
        ("n_heads", manifest.n_heads),
        ("hidden_dim", manifest.hidden_dim),
    ] {
        if v == 0 {
            out.push(Violation::new(
                Check::Manifest,
                name,
                format!("{name} must be at least 1"),
            ));
        }
    }
    let mut seen = HashSet::new();
    for id in &manifest.example_ids {
        if !is_safe_example_id(id) {
            out.push(Violation::new(
                Check::Manifest,
                "example_ids",
                format!("example id {id:?} is empty or not a valid directory name"),
            ));
        }
        if !seen.insert(id.as_str()) {
            out.push(Violation::new(
                Check::Manifest,
                "example_ids",
                format!("duplicate example id {id:?}"),
            ));
        }
    }
    out
}

/// Checks one record against the manifest's shape parameters.
pub fn check_record(manifest: &CorpusManifest, record: &ExampleRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    check_tokens(record, &mut out);
    check_attention(manifest, record, &mut out);
    check_hidden(manifest, record, &mut out);
    check_masks_and_image(record, &mut out);
    out
}

fn check_tokens(record: &ExampleRecord, out: &mut Vec<Violation>) {
    if record.grid_rows == 0 || record.grid_cols == 0 {
        out.push(Violation::new(
            Check::PatchGrid,
            "grid_rows/grid_cols",
            format!(
                "patch grid {}x{} must be positive",
                record.grid_rows, record.grid_cols
            ),
        ));
    }
    let mut patches = HashSet::new();
    let mut n_vision = 0usize;
    for (pos, tok) in record.tokens.iter().enumerate() {
        let field = format!("tokens[{pos}]");
        if tok.index != pos {
            out.push(Violation::new(
                Check::TokenConsistency,
                &field,
                format!("index {} does not match position {pos}", tok.index),
            ));
        }
        let has_patch = tok.patch_row.is_some() || tok.patch_col.is_some();
        match tok.modality {
            Modality::Language => {
                if tok.text.is_none() || has_patch {
                    out.push(Violation::new(
                        Check::TokenConsistency,
                        &field,
                        "LANGUAGE token must carry text and no patch coordinates",
                    ));
                }
                if tok.is_background {
                    out.push(Violation::new(
                        Check::TokenConsistency,
                        &field,
                        "is_background set on a LANGUAGE token",
                    ));
                }
            }
            Modality::Vision => {
                n_vision += 1;
                if tok.text.is_some() || tok.patch_coords().is_none() {
                    out.push(Violation::new(
                        Check::TokenConsistency,
                        &field,
                        "VISION token must carry both patch coordinates and no text",
                    ));
                }
                if tok.is_stopword {
                    out.push(Violation::new(
                        Check::TokenConsistency,
                        &field,
                        "is_stopword set on a VISION token",
                    ));
                }
                if tok.is_special {
                    out.push(Violation::new(
                        Check::TokenConsistency,
                        &field,
                        "is_special set on a VISION token",
                    ));
                }
                if let Some((r, c)) = tok.patch_coords() {
                    if r >= record.grid_rows || c >= record.grid_cols {
                        out.push(Violation::new(
                            Check::PatchGrid,
                            &field,
                            format!(
                                "patch ({r}, {c}) outside the {}x{} grid",
                                record.grid_rows, record.grid_cols
                            ),
                        ));
                    } else if !patches.insert((r, c)) {
                        out.push(Violation::new(
                            Check::PatchGrid,
                            &field,
                            format!("patch ({r}, {c}) used by more than one token"),
                        ));
                    }
                }
            }
        }
    }
    if n_vision > record.grid_rows * record.grid_cols {
        out.push(Violation::new(
            Check::PatchGrid,
            "tokens",
            format!(
                "{n_vision} vision tokens exceed the {}x{} grid",
                record.grid_rows, record.grid_cols
            ),
        ));
    }
}

fn check_attention(manifest: &CorpusManifest, record: &ExampleRecord, out: &mut Vec<Violation>) {
    let l = record.seq_len();
    let expected = [manifest.n_layers, manifest.n_heads, l, l];
    if record.attention.dims() != expected {
        out.push(Violation::new(
            Check::AttentionShape,
            "attention",
            format!(
                "attention dims {:?}, expected {:?}",
                record.attention.dims(),
                expected
            ),
        ));
        return;
    }
    if l == 0 {
        return;
    }
    let mut bad_entries = Vec::new();
    let mut bad_rows = Vec::new();
    for (row_idx, row) in record.attention.data().chunks_exact(l).enumerate() {
        let mut sum = 0.0f64;
        let mut entries_ok = true;
        for &v in row {
            if !v.is_finite() || v < 0.0 {
                entries_ok = false;
            }
            sum += v as f64;
        }
        let (layer, head, q) = (row_idx / (manifest.n_heads * l), (row_idx / l) % manifest.n_heads, row_idx % l);
        if !entries_ok {
            bad_entries.push((layer, head, q));
        } else if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            bad_rows.push((layer, head, q, sum));
        }
    }
    if let Some(&(layer, head, q)) = bad_entries.first() {
        out.push(Violation::new(
            Check::NonFinite,
            "attention",
            format!(
                "negative or non-finite weight in layer {layer} head {head} row {q} ({} rows affected)",
                bad_entries.len()
            ),
        ));
    }
    if let Some(&(layer, head, q, sum)) = bad_rows.first() {
        out.push(Violation::new(
            Check::RowStochastic,
            "attention",
            format!(
                "row_stochastic: layer {layer} head {head} row {q} sums to {sum:.6} ({} rows off by more than {ROW_SUM_TOLERANCE:e})",
                bad_rows.len()
            ),
        ));
    }
}

fn check_hidden(manifest: &CorpusManifest, record: &ExampleRecord, out: &mut Vec<Violation>) {
    let expected = [manifest.n_layers + 1, record.seq_len(), manifest.hidden_dim];
    if record.hidden_states.dims() != expected {
        out.push(Violation::new(
            Check::HiddenShape,
            "hidden_states",
            format!(
                "hidden_states dims {:?}, expected {:?} (n_layers + 1 slices)",
                record.hidden_states.dims(),
                expected
            ),
        ));
        return;
    }
    if let Some(pos) = record.hidden_states.data().iter().position(|v| !v.is_finite()) {
        out.push(Violation::new(
            Check::NonFinite,
            "hidden_states",
            format!("non-finite activation at flat offset {pos}"),
        ));
    }
}

/// Width and height from a PNG IHDR chunk.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    const SIG: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
    if bytes.len() < 24 || bytes[..8] != SIG || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((w, h))
}

fn check_masks_and_image(record: &ExampleRecord, out: &mut Vec<Violation>) {
    let image_dims = match &record.image {
        None => None,
        Some(bytes) => match png_dimensions(bytes) {
            Some(d) => Some(d),
            None => {
                out.push(Violation::new(
                    Check::Image,
                    "image",
                    "image.png is not a PNG file",
                ));
                None
            }
        },
    };
    for (&idx, mask) in &record.masks {
        let field = format!("masks[{idx}]");
        match record.tokens.get(idx) {
            Some(t) if t.modality == Modality::Language => {}
            Some(_) => out.push(Violation::new(
                Check::MaskKey,
                &field,
                format!("mask key {idx} refers to a VISION token"),
            )),
            None => out.push(Violation::new(
                Check::MaskKey,
                &field,
                format!("mask key {idx} is past the end of the sequence"),
            )),
        }
        if mask.rows() < record.grid_rows || mask.cols() < record.grid_cols {
            out.push(Violation::new(
                Check::MaskShape,
                &field,
                format!(
                    "mask {}x{} smaller than the patch grid",
                    mask.rows(),
                    mask.cols()
                ),
            ));
        }
        if let Some((w, h)) = image_dims {
            if mask.rows() != h as usize || mask.cols() != w as usize {
                out.push(Violation::new(
                    Check::MaskShape,
                    &field,
                    format!(
                        "mask {}x{} does not match image resolution {h}x{w}",
                        mask.rows(),
                        mask.cols()
                    ),
                ));
            }
        }
    }
}
