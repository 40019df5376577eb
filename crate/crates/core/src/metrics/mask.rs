use serde::Serialize;

use crate::dump::BitMask;
use crate::error::MaskError;

/// Fraction of each patch's pixels that are inside a mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchFractionGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows × cols`, each in [0, 1].
    pub values: Vec<f64>,
}

impl PatchFractionGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Pixel range `[lo, hi)` covered by patch `index` of `parts` along an axis of `len` pixels.
pub fn patch_span(index: usize, parts: usize, len: usize) -> (usize, usize) {
    (index * len / parts, (index + 1) * len / parts)
}

/// Downsamples a pixel mask to patch fractions. Patch (r, c) covers pixel rows
/// `[⌊r·H/R⌋, ⌊(r+1)·H/R⌋)` and the analogous columns.
pub fn mask_to_patch_grid(
    mask: &BitMask,
    grid_rows: usize,
    grid_cols: usize,
) -> Result<PatchFractionGrid, MaskError> {
    let (h, w) = (mask.rows(), mask.cols());
    if h < grid_rows || w < grid_cols || grid_rows == 0 || grid_cols == 0 {
        return Err(MaskError::Dimension {
            mask_rows: h,
            mask_cols: w,
            grid_rows,
            grid_cols,
        });
    }
    let col_spans: Vec<_> = (0..grid_cols).map(|c| patch_span(c, grid_cols, w)).collect();
    let mut values = Vec::with_capacity(grid_rows * grid_cols);
    for r in 0..grid_rows {
        let (y0, y1) = patch_span(r, grid_rows, h);
        for &(x0, x1) in &col_spans {
            let mut on = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    on += usize::from(mask.get(y, x));
                }
            }
            values.push(on as f64 / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    Ok(PatchFractionGrid {
        rows: grid_rows,
        cols: grid_cols,
        values,
    })
}
