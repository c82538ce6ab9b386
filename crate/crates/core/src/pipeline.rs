//! Detector family: feature extraction composed with scoring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    glcm_features, identity_features, patch_features, quantize, Offset, DEFAULT_LEVELS,
    DEFAULT_OFFSETS, DEFAULT_PATCH,
};
use crate::hacd::{diff_score, fit_hacd, fit_hacd_masked, score_map, AnomalyMap, HacdModel, Ridge};
use crate::raster::{CoregisteredPair, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    #[serde(rename = "diff")]
    Diff,
    #[serde(rename = "hacd")]
    Hacd,
    #[serde(rename = "patch-hacd")]
    PatchHacd,
    #[serde(rename = "glcm-hacd")]
    GlcmHacd,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::Diff,
        Detector::Hacd,
        Detector::PatchHacd,
        Detector::GlcmHacd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Diff => "diff",
            Detector::Hacd => "hacd",
            Detector::PatchHacd => "patch-hacd",
            Detector::GlcmHacd => "glcm-hacd",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::BadConfig(format!("unknown detector {s:?}")))
    }
}

/// Feature and model parameters shared by the HACD detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub patch: usize,
    pub glcm_levels: usize,
    pub glcm_offsets: Vec<Offset>,
    pub ridge: Ridge,
    /// Fit the model on these pixels only; all pixels are still scored.
    pub fit_mask: Option<Mask>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            patch: DEFAULT_PATCH,
            glcm_levels: DEFAULT_LEVELS,
            glcm_offsets: DEFAULT_OFFSETS.to_vec(),
            ridge: Ridge::default(),
            fit_mask: None,
        }
    }
}

pub struct Detection {
    pub map: AnomalyMap,
    pub model: Option<HacdModel>,
}

/// Extracts features for both images, fits (unless `model` is given) and scores.
pub fn detect(
    detector: Detector,
    pair: &CoregisteredPair,
    params: &DetectorParams,
    model: Option<HacdModel>,
) -> Result<Detection> {
    let (x, y) = match detector {
        Detector::Diff => {
            return Ok(Detection {
                map: diff_score(pair),
                model: None,
            })
        }
        Detector::Hacd => (identity_features(pair.t0()), identity_features(pair.t1())),
        Detector::PatchHacd => (
            patch_features(pair.t0(), params.patch)?,
            patch_features(pair.t1(), params.patch)?,
        ),
        Detector::GlcmHacd => {
            let q0 = quantize(pair.t0(), params.glcm_levels)?;
            let q1 = quantize(pair.t1(), params.glcm_levels)?;
            (
                glcm_features(&q0, params.patch, &params.glcm_offsets)?,
                glcm_features(&q1, params.patch, &params.glcm_offsets)?,
            )
        }
    };
    let model = match model {
        Some(m) => m,
        None => match &params.fit_mask {
            Some(mask) => fit_hacd_masked(&x, &y, params.ridge, mask)?,
            None => fit_hacd(&x, &y, params.ridge)?,
        },
    };
    let map = score_map(&model, &x, &y)?;
    Ok(Detection {
        map,
        model: Some(model),
    })
}
