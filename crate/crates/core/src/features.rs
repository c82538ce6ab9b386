//! Per-pixel feature extraction: raw intensities, flattened local patches
//! and per-patch gray-level co-occurrence matrices.
//!
//! Windows that reach past the image edge use mirror padding without
//! repeating the edge pixel (`-1 -> 1`, `n -> n - 2`), so every pixel gets
//! a full-size feature vector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Dims, Raster};

pub const DEFAULT_PATCH: usize = 11;
pub const DEFAULT_LEVELS: usize = 8;

/// Per-pixel feature vectors of a common dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    dims: Dims,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn new(dims: Dims, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("feature dimension must be at least 1".into()));
        }
        if data.len() != dims.len() * dim {
            return Err(Error::Format(format!(
                "feature data has {} values, expected {}",
                data.len(),
                dims.len() * dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("feature values must be finite".into()));
        }
        Ok(Self { dims, dim, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel_count(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Feature vector of pixel `index` (row-major pixel order).
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// Applies `f` to every feature vector, producing a stack of dimension `dim`.
    pub fn map_pixels(&self, dim: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Result<Self> {
        let mut data = vec![0.0; self.pixel_count() * dim];
        data.par_chunks_mut(dim)
            .zip(self.data.par_chunks(self.dim))
            .for_each(|(out, src)| f(src, out));
        Self::new(self.dims, dim, data)
    }
}

/// Quantized image with levels in `[0, levels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedRaster {
    dims: Dims,
    levels: usize,
    data: Vec<u16>,
}

impl QuantizedRaster {
    pub fn new(dims: Dims, levels: usize, data: Vec<u16>) -> Result<Self> {
        if levels == 0 || levels > u16::MAX as usize + 1 {
            return Err(Error::BadLevels(levels));
        }
        if data.len() != dims.len() || dims.is_empty() {
            return Err(Error::Format(format!(
                "quantized data has {} values for grid {dims}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v as usize >= levels) {
            return Err(Error::Format(format!(
                "level {v} out of range for {levels} levels"
            )));
        }
        Ok(Self { dims, levels, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn to_raster(&self) -> Raster {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Raster::new(self.dims.width, self.dims.height, data).expect("grid is non-empty")
    }
}

/// Spatial relation `(dy, dx)` between the two pixels of a co-occurrence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Offset {
    pub dy: i32,
    pub dx: i32,
}

impl Offset {
    pub const fn new(dy: i32, dx: i32) -> Self {
        Self { dy, dx }
    }
}

pub const DEFAULT_OFFSETS: [Offset; 4] = [
    Offset::new(0, 1),
    Offset::new(1, 0),
    Offset::new(1, 1),
    Offset::new(1, -1),
];

/// Mirror index into `0..n` without repeating the edge sample.
/// Valid for `-(n-1) <= i <= 2(n-1)`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r));
    r as usize
}

fn check_patch(patch: usize, dims: Dims) -> Result<()> {
    if patch == 0 {
        return Err(Error::BadPatchSize {
            patch,
            reason: "must be at least 1",
        });
    }
    if patch.is_multiple_of(2) {
        return Err(Error::BadPatchSize {
            patch,
            reason: "must be odd",
        });
    }
    if patch > 2 * dims.width.min(dims.height) - 1 {
        return Err(Error::BadPatchSize {
            patch,
            reason: "mirror padding needs patch <= 2*min(width, height) - 1",
        });
    }
    Ok(())
}

/// Row and column source indices for each window offset, per pixel row/column.
fn window_indices(n: usize, patch: usize) -> Vec<usize> {
    let half = (patch / 2) as isize;
    let mut idx = Vec::with_capacity(n * patch);
    for c in 0..n as isize {
        for k in -half..=half {
            idx.push(reflect(c + k, n));
        }
    }
    idx
}

pub fn identity_features(r: &Raster) -> FeatureStack {
    let data = r.data().iter().map(|&v| v as f64).collect();
    FeatureStack::new(r.dims(), 1, data).expect("raster values are finite")
}

/// Flattened `patch x patch` neighbourhood of every pixel (dimension `patch²`).
pub fn patch_features(r: &Raster, patch: usize) -> Result<FeatureStack> {
    let dims = r.dims();
    check_patch(patch, dims)?;
    let dim = patch * patch;
    let rows = window_indices(dims.height, patch);
    let cols = window_indices(dims.width, patch);
    let src = r.data();
    let mut data = vec![0.0f64; dims.len() * dim];
    data.par_chunks_mut(dims.width * dim)
        .enumerate()
        .for_each(|(y, row_out)| {
            let ys = &rows[y * patch..(y + 1) * patch];
            for (x, out) in row_out.chunks_exact_mut(dim).enumerate() {
                let xs = &cols[x * patch..(x + 1) * patch];
                for (out_row, &sy) in out.chunks_exact_mut(patch).zip(ys) {
                    let line = &src[sy * dims.width..(sy + 1) * dims.width];
                    for (o, &sx) in out_row.iter_mut().zip(xs) {
                        *o = line[sx] as f64;
                    }
                }
            }
        });
    FeatureStack::new(dims, dim, data)
}

/// Equal-probability binning over the whole raster.
///
/// A value `v` with `below` pixels strictly smaller than it gets level
/// `floor(levels * below / n)`. Equal values always share a level, the
/// result depends only on rank order, and re-quantizing a level map with
/// the same `levels` is the identity.
pub fn quantize(r: &Raster, levels: usize) -> Result<QuantizedRaster> {
    if levels == 0 || levels > u16::MAX as usize + 1 {
        return Err(Error::BadLevels(levels));
    }
    let mut sorted = r.data().to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len() as u128;
    let data = r
        .data()
        .iter()
        .map(|&v| {
            let below = sorted.partition_point(|&s| s < v) as u128;
            (levels as u128 * below / n) as u16
        })
        .collect();
    QuantizedRaster::new(r.dims(), levels, data)
}

fn check_offsets(offsets: &[Offset], patch: usize) -> Result<()> {
    if offsets.is_empty() {
        return Err(Error::BadOffset {
            dy: 0,
            dx: 0,
            reason: "offset list is empty",
        });
    }
    for o in offsets {
        if o.dy == 0 && o.dx == 0 {
            return Err(Error::BadOffset {
                dy: 0,
                dx: 0,
                reason: "zero offset pairs a pixel with itself",
            });
        }
        if o.dy.unsigned_abs() as usize >= patch || o.dx.unsigned_abs() as usize >= patch {
            return Err(Error::BadOffset {
                dy: o.dy,
                dx: o.dx,
                reason: "offset must be smaller than the patch",
            });
        }
    }
    Ok(())
}

/// Normalized symmetric co-occurrence matrix of each pixel's patch,
/// flattened row-major (dimension `levels²`).
///
/// For each offset, ordered pairs `(level(i, j), level(i + dy, j + dx))`
/// with both ends inside the patch are counted, the transpose is added,
/// counts are summed over offsets and scaled to sum to one.
pub fn glcm_features(
    q: &QuantizedRaster,
    patch: usize,
    offsets: &[Offset],
) -> Result<FeatureStack> {
    let dims = q.dims();
    check_patch(patch, dims)?;
    check_offsets(offsets, patch)?;
    let levels = q.levels();
    let dim = levels * levels;

    // in-patch pair ranges per offset: (row range, col range), patch-local
    let p = patch as i32;
    let ranges: Vec<(Offset, std::ops::Range<i32>, std::ops::Range<i32>)> = offsets
        .iter()
        .map(|&o| {
            let rows = (-o.dy).max(0)..(p - o.dy).min(p);
            let cols = (-o.dx).max(0)..(p - o.dx).min(p);
            (o, rows, cols)
        })
        .collect();
    let pairs: usize = ranges.iter().map(|(_, r, c)| r.len() * c.len()).sum();
    let scale = 1.0 / (2 * pairs) as f64;

    let rows = window_indices(dims.height, patch);
    let cols = window_indices(dims.width, patch);
    let src = q.data();
    let mut data = vec![0.0f64; dims.len() * dim];
    data.par_chunks_mut(dims.width * dim)
        .enumerate()
        .for_each(|(y, row_out)| {
            let mut window = vec![0usize; patch * patch];
            let mut counts = vec![0u32; dim];
            let ys = &rows[y * patch..(y + 1) * patch];
            for (x, out) in row_out.chunks_exact_mut(dim).enumerate() {
                let xs = &cols[x * patch..(x + 1) * patch];
                for (w_row, &sy) in window.chunks_exact_mut(patch).zip(ys) {
                    let line = &src[sy * dims.width..(sy + 1) * dims.width];
                    for (w, &sx) in w_row.iter_mut().zip(xs) {
                        *w = line[sx] as usize;
                    }
                }
                counts.iter_mut().for_each(|c| *c = 0);
                for (o, rr, cc) in &ranges {
                    let shift = (o.dy * p + o.dx) as isize;
                    for i in rr.clone() {
                        for j in cc.clone() {
                            let at = (i * p + j) as usize;
                            let a = window[at];
                            let b = window[(at as isize + shift) as usize];
                            counts[a * levels + b] += 1;
                            counts[b * levels + a] += 1;
                        }
                    }
                }
                for (o, &c) in out.iter_mut().zip(&counts) {
                    *o = c as f64 * scale;
                }
            }
        });
    FeatureStack::new(dims, dim, data)
}
