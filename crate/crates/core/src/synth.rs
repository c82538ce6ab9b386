//! Deterministic synthetic change scenes.
//!
//! A scene is a spatially correlated log-normal background `b`, observed
//! twice:
//!
//! ```text
//! t0 = b * s0
//! t1 = g * b * s1 + offset + σ * b * n1            (outside the anomaly)
//! t1 += brightness + sqrt(max(γ² - 1, 0)) * σ * b * n2   (inside it)
//! ```
//!
//! `s0`, `s1` are unit-mean exponential speckle draws (or 1 with speckle
//! off), `n1`, `n2` standard normal, `g` the pervasive gain (times the
//! clutter gain inside clutter patches) and `γ` the texture gain. Inside
//! the anomaly the fresh-noise standard deviation becomes `γ σ b`, so
//! `γ = 1` means no texture change.
//!
//! Every random field is drawn from its own [`CounterRng`] stream indexed
//! by pixel, which makes the output independent of evaluation order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Dims, GroundTruth, Mask, Raster};
use crate::rng::CounterRng;

/// Pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    fn fits(&self, dims: Dims) -> bool {
        self.w > 0
            && self.h > 0
            && self.x.checked_add(self.w).is_some_and(|e| e <= dims.width)
            && self.y.checked_add(self.h).is_some_and(|e| e <= dims.height)
    }
}

/// Width of the ambiguity band around the anomaly rectangle.
pub const MASK_MARGIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Box-filter radius of the background field, in pixels.
    pub background_corr_len: usize,
    /// Median background intensity.
    #[serde(default = "default_level")]
    pub background_level: f64,
    /// Log-domain standard deviation of the background.
    #[serde(default = "default_contrast")]
    pub background_contrast: f64,
    pub pervasive_gain: f64,
    pub pervasive_offset: f64,
    /// Relative amplitude of the fresh per-pixel noise in `t1`.
    pub noise_sigma: f64,
    pub anomaly_rect: Rect,
    pub anomaly_texture_gain: f64,
    /// Additive brightness inside the anomaly at `t1`.
    #[serde(default)]
    pub anomaly_brightness: f64,
    pub speckle: bool,
    /// Patches whose gain changes by `clutter_gain` on top of the pervasive gain.
    #[serde(default)]
    pub clutter_rects: Vec<Rect>,
    #[serde(default = "default_gain")]
    pub clutter_gain: f64,
}

fn default_level() -> f64 {
    1.0
}

fn default_contrast() -> f64 {
    0.5
}

fn default_gain() -> f64 {
    1.0
}

impl SceneConfig {
    /// Plain configuration with no change other than fresh noise.
    pub fn quiet(width: usize, height: usize, seed: u64, anomaly_rect: Rect) -> Self {
        Self {
            width,
            height,
            seed,
            background_corr_len: 3,
            background_level: default_level(),
            background_contrast: default_contrast(),
            pervasive_gain: 1.0,
            pervasive_offset: 0.0,
            noise_sigma: 0.0,
            anomaly_rect,
            anomaly_texture_gain: 0.0,
            anomaly_brightness: 0.0,
            speckle: false,
            clutter_rects: Vec::new(),
            clutter_gain: 1.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("scene must be non-empty, got {}", self.dims()));
        }
        if self
            .width
            .checked_mul(self.height)
            .is_none_or(|n| n > 1 << 28)
        {
            return bad(format!("scene {} is too large", self.dims()));
        }
        let finite = [
            self.background_level,
            self.background_contrast,
            self.pervasive_gain,
            self.pervasive_offset,
            self.noise_sigma,
            self.anomaly_texture_gain,
            self.anomaly_brightness,
            self.clutter_gain,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("scene parameters must be finite".into());
        }
        if self.background_level <= 0.0 {
            return bad("background_level must be > 0".into());
        }
        if self.pervasive_gain <= 0.0 || self.clutter_gain <= 0.0 {
            return bad("gains must be > 0".into());
        }
        if self.background_contrast < 0.0
            || self.noise_sigma < 0.0
            || self.anomaly_texture_gain < 0.0
        {
            return bad("contrast, noise_sigma and texture gain must be >= 0".into());
        }
        if self.background_corr_len > 64 {
            return bad("background_corr_len must be <= 64".into());
        }
        let r = self.anomaly_rect;
        if !r.fits(self.dims()) {
            return bad(format!(
                "anomaly_rect {r:?} is outside the {} grid",
                self.dims()
            ));
        }
        if r.w <= 2 * MASK_MARGIN || r.h <= 2 * MASK_MARGIN {
            return bad(format!(
                "anomaly_rect must be larger than {} pixels on each side",
                2 * MASK_MARGIN
            ));
        }
        if let Some(c) = self.clutter_rects.iter().find(|c| !c.fits(self.dims())) {
            return bad(format!("clutter rect {c:?} is outside the grid"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BadConfig(format!("bad scene config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub t0: Raster,
    pub t1: Raster,
    pub ground_truth: GroundTruth,
}

// PRNG stream ids, one per random field
const STREAM_BACKGROUND: u64 = 0;
const STREAM_SPECKLE_T0: u64 = 1;
const STREAM_SPECKLE_T1: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_TEXTURE: u64 = 4;

/// Unit-variance correlated field: white noise drawn on a grid padded by
/// `radius`, box-summed over `(2r+1)²` and divided by `2r+1`.
fn background_field(cfg: &SceneConfig) -> Vec<f64> {
    let r = cfg.background_corr_len;
    let (w, h) = (cfg.width, cfg.height);
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let rng = CounterRng::new(cfg.seed, STREAM_BACKGROUND);
    let k = 2 * r + 1;
    // horizontal sums on every padded row
    let mut rows = vec![0.0f64; ph * w];
    rows.par_chunks_mut(w).enumerate().for_each(|(py, out)| {
        let line: Vec<f64> = (0..pw)
            .map(|px| rng.normal((py * pw + px) as u64))
            .collect();
        for (x, o) in out.iter_mut().enumerate() {
            *o = line[x..x + k].iter().sum();
        }
    });
    let scale = 1.0 / k as f64;
    let mut field = vec![0.0f64; w * h];
    field.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        for (x, o) in out.iter_mut().enumerate() {
            let s: f64 = (y..y + k).map(|py| rows[py * w + x]).sum();
            *o = s * scale;
        }
    });
    field
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let dims = cfg.dims();
    let field = background_field(cfg);
    let speckle0 = CounterRng::new(cfg.seed, STREAM_SPECKLE_T0);
    let speckle1 = CounterRng::new(cfg.seed, STREAM_SPECKLE_T1);
    let noise = CounterRng::new(cfg.seed, STREAM_NOISE);
    let texture = CounterRng::new(cfg.seed, STREAM_TEXTURE);
    let extra_texture = (cfg.anomaly_texture_gain * cfg.anomaly_texture_gain - 1.0)
        .max(0.0)
        .sqrt();

    let mut t0 = vec![0.0f32; dims.len()];
    let mut t1 = vec![0.0f32; dims.len()];
    t0.par_chunks_mut(dims.width)
        .zip(t1.par_chunks_mut(dims.width))
        .enumerate()
        .for_each(|(y, (row0, row1))| {
            for x in 0..dims.width {
                let p = y * dims.width + x;
                let i = p as u64;
                let base = cfg.background_level * libm::exp(cfg.background_contrast * field[p]);
                let (m0, m1) = if cfg.speckle {
                    (speckle0.exponential(i), speckle1.exponential(i))
                } else {
                    (1.0, 1.0)
                };
                let gain = if cfg.clutter_rects.iter().any(|c| c.contains(x, y)) {
                    cfg.pervasive_gain * cfg.clutter_gain
                } else {
                    cfg.pervasive_gain
                };
                let sigma = cfg.noise_sigma * base;
                let v0 = base * m0;
                let mut v1 = gain * base * m1 + cfg.pervasive_offset;
                if sigma > 0.0 {
                    v1 += sigma * noise.normal(i);
                }
                if cfg.anomaly_rect.contains(x, y) {
                    v1 += cfg.anomaly_brightness;
                    if extra_texture > 0.0 && sigma > 0.0 {
                        v1 += extra_texture * sigma * texture.normal(i);
                    }
                }
                row0[x] = v0 as f32;
                row1[x] = v1 as f32;
            }
        });

    let r = cfg.anomaly_rect;
    let m = MASK_MARGIN;
    let inner = Mask::from_fn(dims, |x, y| {
        x >= r.x + m && x + m < r.x + r.w && y >= r.y + m && y + m < r.y + r.h
    });
    let outer = Mask::from_fn(dims, |x, y| {
        x + m >= r.x && x < r.x + r.w + m && y + m >= r.y && y < r.y + r.h + m
    });
    let t0 = Raster::new(dims.width, dims.height, t0)
        .map_err(|e| Error::BadConfig(format!("scene produced invalid t0: {e}")))?;
    let t1 = Raster::new(dims.width, dims.height, t1)
        .map_err(|e| Error::BadConfig(format!("scene produced invalid t1: {e}")))?;
    Ok(Scene {
        t0,
        t1,
        ground_truth: GroundTruth::new(inner, outer)?,
    })
}

pub const SUITE_SIZE: usize = 512;

/// The three benchmark scenes, in order: `simple-additive`, `textured`,
/// `cluttered`.
pub fn scene_suite() -> Vec<(&'static str, SceneConfig)> {
    let anomaly = Rect::new(256, 160, 96, 96);
    let simple = SceneConfig {
        background_corr_len: 3,
        background_contrast: 0.6,
        pervasive_gain: 1.0,
        pervasive_offset: 0.0,
        noise_sigma: 0.25,
        anomaly_brightness: 1.5,
        ..SceneConfig::quiet(SUITE_SIZE, SUITE_SIZE, 101, anomaly)
    };
    let textured = SceneConfig {
        background_corr_len: 3,
        background_contrast: 0.6,
        pervasive_gain: 1.3,
        pervasive_offset: 0.1,
        noise_sigma: 0.2,
        anomaly_texture_gain: 2.5,
        ..SceneConfig::quiet(SUITE_SIZE, SUITE_SIZE, 202, anomaly)
    };
    let cluttered = SceneConfig {
        seed: 303,
        pervasive_gain: 1.6,
        clutter_rects: vec![
            Rect::new(32, 32, 128, 80),
            Rect::new(48, 352, 96, 120),
            Rect::new(384, 400, 100, 72),
        ],
        clutter_gain: 1.8,
        ..textured.clone()
    };
    vec![
        ("simple-additive", simple),
        ("textured", textured),
        ("cluttered", cluttered),
    ]
}

pub fn find_scene(name: &str) -> Result<SceneConfig> {
    scene_suite()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::UnknownScene(name.to_string()))
}
