//! Token-grid geometry: relative-position lookup and grid-to-pixel upsampling.

use crate::autodiff::{BiasIndex, Resampler};
use crate::dataset::Gray;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::ModelError;

/// Table row for the offset between token `i` and token `j` on a `grid × grid`
/// lattice (raster order).
#[inline]
pub fn relative_offset_row(grid: usize, i: usize, j: usize) -> usize {
    let (ri, ci) = (i / grid, i % grid);
    let (rj, cj) = (j / grid, j % grid);
    let span = 2 * grid - 1;
    let dr = ri + grid - 1 - rj;
    let dc = ci + grid - 1 - cj;
    dr * span + dc
}

pub fn relative_position_index(grid: usize) -> BiasIndex {
    let n = grid * grid;
    let mut index = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            index.push(relative_offset_row(grid, i, j) as u32);
        }
    }
    BiasIndex {
        queries: n,
        keys: n,
        index,
    }
}

/// Expands a `(2G-1)² × heads` table into one `N × N` bias matrix per head.
pub fn relative_position_bias<T: Scalar>(
    grid: usize,
    heads: usize,
    table: &Matrix<T>,
) -> Result<Vec<Matrix<T>>, ModelError> {
    let span = 2 * grid - 1;
    if table.shape() != (span * span, heads) {
        return Err(ModelError::ShapeMismatch(format!(
            "bias table {:?}, expected {:?}",
            table.shape(),
            (span * span, heads)
        )));
    }
    let n = grid * grid;
    Ok((0..heads)
        .map(|h| Matrix::from_fn(n, n, |i, j| table.get(relative_offset_row(grid, i, j), h)))
        .collect())
}

/// Bilinear taps along one axis with half-pixel centres and edge clamping.
fn linear_taps(i: usize, in_len: usize, out_len: usize) -> [(usize, f64); 2] {
    let src = (i as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    let src = src.max(0.0);
    let lo = (src.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    let frac = if hi == lo { 0.0 } else { src - lo as f64 };
    [(lo, 1.0 - frac), (hi, frac)]
}

/// Bilinear upsampling of a row-major `grid × grid` map to `size × size`.
pub fn bilinear_upsampler<T: Scalar>(grid: usize, size: usize) -> Resampler<T> {
    let axis: Vec<_> = (0..size).map(|i| linear_taps(i, grid, size)).collect();
    let mut taps = Vec::with_capacity(size * size);
    for ty in &axis {
        for tx in &axis {
            let mut t = Vec::with_capacity(4);
            for &(y, wy) in ty {
                for &(x, wx) in tx {
                    let w = wy * wx;
                    if w != 0.0 {
                        t.push(((y * grid + x) as u32, T::of(w)));
                    }
                }
            }
            taps.push(t);
        }
    }
    Resampler {
        in_len: grid * grid,
        taps,
    }
}

/// Splits an image into non-overlapping `patch × patch` tiles, one row each,
/// tiles in raster order.
pub fn patchify<T: Scalar>(image: &Gray<T>, patch: usize) -> Matrix<T> {
    let g = image.width / patch;
    let rows = (image.height / patch) * g;
    let mut out = Matrix::zeros(rows, patch * patch);
    for t in 0..rows {
        let (gy, gx) = (t / g, t % g);
        let row = out.row_mut(t);
        for py in 0..patch {
            let y = gy * patch + py;
            let src = &image.data[y * image.width + gx * patch..y * image.width + (gx + 1) * patch];
            row[py * patch..(py + 1) * patch].copy_from_slice(src);
        }
    }
    out
}
