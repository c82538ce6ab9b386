//! Single-band rasters, boolean masks and the R32 on-disk format.
//!
//! An R32 raster is a pair of files sharing a base name: `<name>.json` holds
//! the header and `<name>.r32` holds exactly `width * height` little-endian
//! `f32` values in row-major order with a top-left origin.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const R32_MAGIC: &str = "R32";
pub const R32_DTYPE: &str = "f32le";
pub const R32_ORDER: &str = "row-major";

/// Grid dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Single-band `f32` image with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    dims: Dims,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} pixels for {width}x{height}, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value {} at pixel {i}",
                data[i]
            )));
        }
        Ok(Self {
            dims: Dims::new(width, height),
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.dims.width + x]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct R32Header {
    magic: String,
    width: usize,
    height: usize,
    dtype: String,
    order: String,
}

/// Resolves `<name>`, `<name>.json` or `<name>.r32` to the header and payload paths.
pub fn r32_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("r32") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = base.clone().into_os_string();
    header.push(".json");
    let mut payload = base.into_os_string();
    payload.push(".r32");
    (PathBuf::from(header), PathBuf::from(payload))
}

/// Parses an R32 header document and payload bytes.
pub fn decode_r32(header: &[u8], payload: &[u8]) -> Result<Raster> {
    let header: R32Header = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("bad R32 header: {e}")))?;
    if header.magic != R32_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", header.magic)));
    }
    if header.dtype != R32_DTYPE {
        return Err(Error::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    if header.order != R32_ORDER {
        return Err(Error::Format(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    if header.width == 0 || header.height == 0 {
        return Err(Error::Format("raster dimensions must be positive".into()));
    }
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Raster::new(header.width, header.height, data)
}

/// Serializes a raster into its R32 header text and payload bytes.
pub fn encode_r32(raster: &Raster) -> (String, Vec<u8>) {
    let header = R32Header {
        magic: R32_MAGIC.into(),
        width: raster.width(),
        height: raster.height(),
        dtype: R32_DTYPE.into(),
        order: R32_ORDER.into(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    let mut payload = Vec::with_capacity(raster.data.len() * 4);
    for v in &raster.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    (text, payload)
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let (header_path, payload_path) = r32_paths(path.as_ref());
    let header = fs::read(&header_path).map_err(|e| Error::read(&header_path, e))?;
    let payload = fs::read(&payload_path).map_err(|e| Error::read(&payload_path, e))?;
    decode_r32(&header, &payload)
}

pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let (header_path, payload_path) = r32_paths(path.as_ref());
    let (header, payload) = encode_r32(raster);
    fs::write(&header_path, header).map_err(|e| Error::write(&header_path, e))?;
    fs::write(&payload_path, payload).map_err(|e| Error::write(&payload_path, e))?;
    Ok(())
}

/// Two rasters on the same grid: `t0` before, `t1` after.
#[derive(Debug, Clone, PartialEq)]
pub struct CoregisteredPair {
    t0: Raster,
    t1: Raster,
}

impl CoregisteredPair {
    pub fn t0(&self) -> &Raster {
        &self.t0
    }

    pub fn t1(&self) -> &Raster {
        &self.t1
    }

    pub fn dims(&self) -> Dims {
        self.t0.dims()
    }
}

pub fn make_pair(a: Raster, b: Raster) -> Result<CoregisteredPair> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(CoregisteredPair { t0: a, t1: b })
}

/// Boolean pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::Format(format!(
                "mask has {} pixels, grid {dims} needs {}",
                bits.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn from_fn(dims: Dims, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                bits.push(f(x, y));
            }
        }
        Self { dims, bits }
    }

    /// Masks are rasters whose values are exactly 0.0 or 1.0.
    pub fn from_raster(raster: &Raster) -> Result<Self> {
        let bits = raster
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 0.0 {
                    Ok(false)
                } else if v == 1.0 {
                    Ok(true)
                } else {
                    Err(Error::Format(format!(
                        "mask value {v} at pixel {i} is neither 0 nor 1"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims: raster.dims(),
            bits,
        })
    }

    pub fn to_raster(&self) -> Raster {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Raster::new(self.dims.width, self.dims.height, data).expect("mask grid is non-empty")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.dims.width + x]
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Mask::from_raster(&load_raster(path)?)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_raster(&mask.to_raster(), path)
}

/// Inner/outer truth masks. `inner` is entirely inside the target,
/// `outer` covers all of it; `inner ⊆ outer`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    inner: Mask,
    outer: Mask,
}

impl GroundTruth {
    pub fn new(inner: Mask, outer: Mask) -> Result<Self> {
        if inner.dims() != outer.dims() {
            return Err(Error::DimensionMismatch {
                a: inner.dims(),
                b: outer.dims(),
            });
        }
        let width = inner.dims().width;
        if let Some(i) = inner
            .bits()
            .iter()
            .zip(outer.bits())
            .position(|(&i, &o)| i && !o)
        {
            return Err(Error::MaskInconsistent {
                x: i % width,
                y: i / width,
            });
        }
        Ok(Self { inner, outer })
    }

    /// Unambiguous truth: both masks are the same.
    pub fn exact(mask: Mask) -> Self {
        Self {
            inner: mask.clone(),
            outer: mask,
        }
    }

    pub fn inner(&self) -> &Mask {
        &self.inner
    }

    pub fn outer(&self) -> &Mask {
        &self.outer
    }

    pub fn dims(&self) -> Dims {
        self.inner.dims()
    }
}

/// Loads and validates a truth mask pair on `grid`. With a single mask
/// path the inner and outer masks are identical.
pub fn load_ground_truth(
    inner_path: Option<&Path>,
    outer_path: Option<&Path>,
    grid: Dims,
) -> Result<GroundTruth> {
    let (inner, outer) = match (inner_path, outer_path) {
        (Some(i), Some(o)) => (load_mask(i)?, load_mask(o)?),
        (Some(p), None) | (None, Some(p)) => {
            let m = load_mask(p)?;
            (m.clone(), m)
        }
        (None, None) => return Err(Error::BadConfig("no ground-truth mask given".into())),
    };
    for m in [&inner, &outer] {
        if m.dims() != grid {
            return Err(Error::DimensionMismatch {
                a: m.dims(),
                b: grid,
            });
        }
    }
    GroundTruth::new(inner, outer)
}

/// Plain-text pixel dump: a `width height` line followed by one line per
/// row of space-separated values. Values use the shortest representation
/// that parses back to the same `f32`.
pub fn to_text_dump(raster: &Raster) -> String {
    let mut out = format!("{} {}\n", raster.width(), raster.height());
    for row in raster.data().chunks(raster.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_text_dump(text: &str) -> Result<Raster> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty text dump".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad dump header {header:?}: {e}")))?;
    let [width, height] = dims[..] else {
        return Err(Error::Format(format!("bad dump header {header:?}")));
    };
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for line in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            if data.len() == expected {
                return Err(Error::Format("too many values in dump".into()));
            }
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad value {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != width {
            return Err(Error::Format(format!(
                "row {rows} has {} values, expected {width}",
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::Format(format!(
            "dump has {rows} rows, expected {height}"
        )));
    }
    Raster::new(width, height, data)
}
