//! Hyperbolic anomalous change detection and the image-differencing baseline.
//!
//! The per-pixel feature vectors `x` (before) and `y` (after) are modelled
//! as jointly Gaussian with covariance
//!
//! ```text
//!     C = | Cxx  Cxy |
//!         | Cyx  Cyy |
//! ```
//!
//! and a change is scored by the negative log ratio of the joint density to
//! the product of the marginals:
//!
//! ```text
//!     -log P(x, y) / (P(x) P(y)) = ½ zᵀ Q z + k
//!     Q = C⁻¹ - diag(Cxx⁻¹, Cyy⁻¹)
//!     k = ½ (log|C| - log|Cxx| - log|Cyy|)
//! ```
//!
//! with `z` the mean-centred stacked vector. The constant `k` keeps the
//! score equal to the density ratio itself, not just its ordering.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::linalg::{sub_block, Cholesky};
use crate::raster::{CoregisteredPair, Dims, Mask, Raster};

/// Rows per accumulation tile. Tiles are always combined in ascending
/// order so fitted parameters do not depend on the worker count.
pub const TILE_ROWS: usize = 256;

pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

/// Diagonal loading added to the joint covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// `ε = factor * trace(C) / d`, i.e. relative to the mean eigenvalue.
    TraceScaled(f64),
    /// Fixed `ε`.
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::TraceScaled(DEFAULT_RIDGE_SCALE)
    }
}

impl Ridge {
    pub fn none() -> Self {
        Ridge::Absolute(0.0)
    }

    fn resolve(&self, mean_variance: f64) -> Result<f64> {
        let eps = match *self {
            Ridge::TraceScaled(f) => {
                check_nonneg(f)?;
                f * mean_variance
            }
            Ridge::Absolute(e) => {
                check_nonneg(e)?;
                e
            }
        };
        Ok(eps)
    }
}

fn check_nonneg(v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::BadConfig(format!(
            "ridge must be finite and >= 0, got {v}"
        )))
    }
}

impl fmt::Display for Ridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ridge::TraceScaled(v) => write!(f, "{v}"),
            Ridge::Absolute(v) => write!(f, "abs:{v}"),
        }
    }
}

/// `"1e-6"` is trace-scaled, `"abs:0.01"` is absolute.
impl FromStr for Ridge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadConfig(format!("bad ridge {s:?}"));
        let ridge = match s.strip_prefix("abs:") {
            Some(v) => Ridge::Absolute(v.trim().parse().map_err(|_| bad())?),
            None => Ridge::TraceScaled(s.trim().parse().map_err(|_| bad())?),
        };
        ridge.resolve(1.0)?;
        Ok(ridge)
    }
}

/// Per-pixel anomalousness, higher is more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    dims: Dims,
    scores: Vec<f64>,
}

impl AnomalyMap {
    pub fn new(dims: Dims, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != dims.len() || dims.is_empty() {
            return Err(Error::Format(format!(
                "anomaly map has {} scores for grid {dims}",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Internal(format!(
                "non-finite score {} at pixel {i}",
                scores[i]
            )));
        }
        Ok(Self { dims, scores })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Narrows to `f32` for storage in the R32 format.
    pub fn to_raster(&self) -> Result<Raster> {
        let data = self.scores.iter().map(|&s| s as f32).collect();
        Raster::new(self.dims.width, self.dims.height, data)
            .map_err(|e| Error::Internal(format!("score does not fit in f32: {e}")))
    }

    pub fn from_raster(r: &Raster) -> Self {
        Self {
            dims: r.dims(),
            scores: r.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Fitted joint-Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct HacdModel {
    dim_x: usize,
    dim_y: usize,
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    covariance: Vec<f64>,
    ridge: f64,
    quad: Vec<f64>,
    log_det_const: f64,
    // upper triangle of Q by rows, off-diagonals doubled
    packed: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    dim_x: usize,
    dim_y: usize,
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    covariance: Vec<f64>,
    ridge: f64,
}

const MODEL_FORMAT: &str = "acdkit-hacd-1";

impl HacdModel {
    /// Builds a model from its sample statistics. `covariance` is the
    /// unregularized joint covariance, row-major `(dx+dy)²`, `ridge` the
    /// absolute diagonal loading applied before factoring.
    pub fn from_parts(
        mean_x: Vec<f64>,
        mean_y: Vec<f64>,
        covariance: Vec<f64>,
        ridge: f64,
    ) -> Result<Self> {
        let dim_x = mean_x.len();
        let dim_y = mean_y.len();
        let d = dim_x + dim_y;
        if dim_x == 0 || dim_y == 0 {
            return Err(Error::Format("model dimensions must be positive".into()));
        }
        if covariance.len() != d * d {
            return Err(Error::Format(format!(
                "covariance has {} entries, expected {}",
                covariance.len(),
                d * d
            )));
        }
        if mean_x
            .iter()
            .chain(&mean_y)
            .chain(&covariance)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Format("model parameters must be finite".into()));
        }
        check_nonneg(ridge)?;
        for i in 0..d {
            for j in i + 1..d {
                let (a, b) = (covariance[i * d + j], covariance[j * d + i]);
                let scale = covariance[i * d + i]
                    .abs()
                    .max(covariance[j * d + j].abs())
                    .max(f64::MIN_POSITIVE);
                if (a - b).abs() > 1e-10 * scale {
                    return Err(Error::Format(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }

        let mut reg = covariance.clone();
        for i in 0..d {
            reg[i * d + i] += ridge;
        }
        let joint = Cholesky::factor(&reg, d)?;
        let chol_x = Cholesky::factor(&sub_block(&reg, d, 0, dim_x), dim_x)?;
        let chol_y =
            Cholesky::factor(&sub_block(&reg, d, dim_x, dim_y), dim_y).map_err(|e| match e {
                Error::SingularCovariance { pivot, value } => Error::SingularCovariance {
                    pivot: pivot + dim_x,
                    value,
                },
                e => e,
            })?;

        let mut quad = joint.inverse();
        for (start, inv) in [(0, chol_x.inverse()), (dim_x, chol_y.inverse())] {
            let n = inv.len().isqrt();
            for r in 0..n {
                for c in 0..n {
                    quad[(start + r) * d + start + c] -= inv[r * n + c];
                }
            }
        }
        let log_det_const = 0.5 * (joint.log_det() - chol_x.log_det() - chol_y.log_det());

        let mut packed = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            packed.push(quad[i * d + i]);
            for j in i + 1..d {
                packed.push(2.0 * quad[i * d + j]);
            }
        }

        Ok(Self {
            dim_x,
            dim_y,
            mean_x,
            mean_y,
            covariance,
            ridge,
            quad,
            log_det_const,
            packed,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn mean_x(&self) -> &[f64] {
        &self.mean_x
    }

    pub fn mean_y(&self) -> &[f64] {
        &self.mean_y
    }

    /// Unregularized joint covariance, row-major.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Absolute ridge `ε` that was added to the diagonal.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `Q = C⁻¹ - diag(Cxx⁻¹, Cyy⁻¹)` of the regularized covariance.
    pub fn quadratic_form(&self) -> &[f64] {
        &self.quad
    }

    pub fn log_det_const(&self) -> f64 {
        self.log_det_const
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            dim_x: self.dim_x,
            dim_y: self.dim_y,
            mean_x: self.mean_x.clone(),
            mean_y: self.mean_y.clone(),
            covariance: self.covariance.clone(),
            ridge: self.ridge,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("bad model: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unknown model format {:?}",
                doc.format
            )));
        }
        if doc.mean_x.len() != doc.dim_x || doc.mean_y.len() != doc.dim_y {
            return Err(Error::Format(
                "mean length does not match declared dims".into(),
            ));
        }
        Self::from_parts(doc.mean_x, doc.mean_y, doc.covariance, doc.ridge)
    }

    #[inline]
    fn score_centered(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut at = 0;
        for (i, &zi) in z.iter().enumerate() {
            let len = z.len() - i;
            total += zi * dot(&self.packed[at..at + len], &z[i..]);
            at += len;
        }
        0.5 * total + self.log_det_const
    }

    fn center_into(&self, x: &[f64], y: &[f64], z: &mut [f64]) {
        let (zx, zy) = z.split_at_mut(self.dim_x);
        for ((o, v), m) in zx.iter_mut().zip(x).zip(&self.mean_x) {
            *o = v - m;
        }
        for ((o, v), m) in zy.iter_mut().zip(y).zip(&self.mean_y) {
            *o = v - m;
        }
    }
}

/// Fixed-order dot product with four partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_grids(x: &FeatureStack, y: &FeatureStack) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::GridMismatch {
            a: x.dims(),
            b: y.dims(),
        });
    }
    Ok(())
}

/// Fits the joint-Gaussian model over every pixel of the scene.
pub fn fit_hacd(x: &FeatureStack, y: &FeatureStack, ridge: Ridge) -> Result<HacdModel> {
    fit(x, y, ridge, None)
}

/// Fits over the pixels selected by `mask` only.
pub fn fit_hacd_masked(
    x: &FeatureStack,
    y: &FeatureStack,
    ridge: Ridge,
    mask: &Mask,
) -> Result<HacdModel> {
    if mask.dims() != x.dims() {
        return Err(Error::GridMismatch {
            a: mask.dims(),
            b: x.dims(),
        });
    }
    fit(x, y, ridge, Some(mask.bits()))
}

fn fit(
    x: &FeatureStack,
    y: &FeatureStack,
    ridge: Ridge,
    mask: Option<&[bool]>,
) -> Result<HacdModel> {
    check_grids(x, y)?;
    let dims = x.dims();
    let (dx, dy) = (x.dim(), y.dim());
    let d = dx + dy;
    let selected = |p: usize| mask.is_none_or(|m| m[p]);
    let count = (0..dims.len()).filter(|&p| selected(p)).count();
    if count == 0 {
        return Err(Error::BadConfig("fit mask selects no pixels".into()));
    }
    let tiles: Vec<std::ops::Range<usize>> = (0..dims.height)
        .step_by(TILE_ROWS)
        .map(|r| r * dims.width..(r + TILE_ROWS).min(dims.height) * dims.width)
        .collect();

    let sums: Vec<Vec<f64>> = tiles
        .par_iter()
        .map(|tile| {
            let mut s = vec![0.0f64; d];
            for p in tile.clone().filter(|&p| selected(p)) {
                let (sx, sy) = s.split_at_mut(dx);
                sx.iter_mut().zip(x.pixel(p)).for_each(|(a, v)| *a += v);
                sy.iter_mut().zip(y.pixel(p)).for_each(|(a, v)| *a += v);
            }
            s
        })
        .collect();
    let mut mean = vec![0.0f64; d];
    for s in &sums {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    let n = count as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let packed_len = d * (d + 1) / 2;
    let partials: Vec<Vec<f64>> = tiles
        .par_iter()
        .map(|tile| {
            let mut acc = vec![0.0f64; packed_len];
            let mut z = vec![0.0f64; d];
            for p in tile.clone().filter(|&p| selected(p)) {
                let (zx, zy) = z.split_at_mut(dx);
                for ((o, v), m) in zx.iter_mut().zip(x.pixel(p)).zip(&mean[..dx]) {
                    *o = v - m;
                }
                for ((o, v), m) in zy.iter_mut().zip(y.pixel(p)).zip(&mean[dx..]) {
                    *o = v - m;
                }
                let mut at = 0;
                for i in 0..d {
                    let zi = z[i];
                    let row = &mut acc[at..at + d - i];
                    for (a, &zj) in row.iter_mut().zip(&z[i..]) {
                        *a += zi * zj;
                    }
                    at += d - i;
                }
            }
            acc
        })
        .collect();
    let mut packed = vec![0.0f64; packed_len];
    for part in &partials {
        packed.iter_mut().zip(part).for_each(|(a, v)| *a += v);
    }

    let mut cov = vec![0.0f64; d * d];
    let mut at = 0;
    for i in 0..d {
        for j in i..d {
            let v = packed[at] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
            at += 1;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let eps = ridge.resolve(trace / d as f64)?;
    let mean_y = mean.split_off(dx);
    HacdModel::from_parts(mean, mean_y, cov, eps)
}

/// Anomalousness of a single change `x -> y`.
pub fn hacd_score(m: &HacdModel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != m.dim_x {
        return Err(Error::FeatureDimension {
            expected: m.dim_x,
            got: x.len(),
        });
    }
    if y.len() != m.dim_y {
        return Err(Error::FeatureDimension {
            expected: m.dim_y,
            got: y.len(),
        });
    }
    let mut z = vec![0.0; m.dim_x + m.dim_y];
    m.center_into(x, y, &mut z);
    Ok(m.score_centered(&z))
}

/// Applies [`hacd_score`] to every pixel.
pub fn score_map(m: &HacdModel, x: &FeatureStack, y: &FeatureStack) -> Result<AnomalyMap> {
    check_grids(x, y)?;
    for (stack, expected) in [(x, m.dim_x), (y, m.dim_y)] {
        if stack.dim() != expected {
            return Err(Error::FeatureDimension {
                expected,
                got: stack.dim(),
            });
        }
    }
    let dims = x.dims();
    let mut scores = vec![0.0f64; dims.len()];
    scores
        .par_chunks_mut(dims.width)
        .enumerate()
        .for_each(|(row, out)| {
            let mut z = vec![0.0; m.dim_x + m.dim_y];
            for (col, s) in out.iter_mut().enumerate() {
                let p = row * dims.width + col;
                m.center_into(x.pixel(p), y.pixel(p), &mut z);
                *s = m.score_centered(&z);
            }
        });
    AnomalyMap::new(dims, scores)
}

/// Absolute pixel difference `|t1 - t0|`.
pub fn diff_score(pair: &CoregisteredPair) -> AnomalyMap {
    let scores = pair
        .t0()
        .data()
        .iter()
        .zip(pair.t1().data())
        .map(|(&a, &b)| (b as f64 - a as f64).abs())
        .collect();
    AnomalyMap::new(pair.dims(), scores).expect("finite inputs give finite differences")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::identity_features;
    use crate::raster::make_pair;
    use crate::rng::CounterRng;

    fn stack(dims: Dims, dim: usize, data: Vec<f64>) -> FeatureStack {
        FeatureStack::new(dims, dim, data).unwrap()
    }

    fn bivariate(n: usize, cov: f64, seed: u64) -> (FeatureStack, FeatureStack) {
        let rng = CounterRng::new(seed, 0);
        let b = (1.0 - cov * cov).sqrt();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 0..n as u64 {
            let u = rng.normal(2 * i);
            let v = rng.normal(2 * i + 1);
            xs.push(u);
            ys.push(cov * u + b * v);
        }
        let dims = Dims::new(n, 1);
        (stack(dims, 1, xs), stack(dims, 1, ys))
    }

    fn model_1d(var_x: f64, var_y: f64, cov: f64) -> HacdModel {
        HacdModel::from_parts(vec![0.0], vec![0.0], vec![var_x, cov, cov, var_y], 0.0).unwrap()
    }

    /// Two-pass covariance, written independently of the tiled accumulator.
    fn two_pass_cov(a: &[f64], b: &[f64]) -> [f64; 3] {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut c = [0.0; 3];
        for (x, y) in a.iter().zip(b) {
            c[0] += (x - ma) * (x - ma);
            c[1] += (x - ma) * (y - mb);
            c[2] += (y - mb) * (y - mb);
        }
        c.map(|v| v / n)
    }

    #[test]
    fn fitted_covariance_matches_two_pass_oracle() {
        let (x, y) = bivariate(20_000, 0.5, 7);
        let m = fit_hacd(&x, &y, Ridge::none()).unwrap();
        let c = m.covariance();
        let oracle = two_pass_cov(x.data(), y.data());
        assert!((c[0] - oracle[0]).abs() < 1e-12);
        assert!((c[1] - oracle[1]).abs() < 1e-12);
        assert!((c[3] - oracle[2]).abs() < 1e-12);
        // sampling tolerance against the generating covariance
        for (got, want) in [(c[0], 1.0), (c[1], 0.5), (c[3], 1.0)] {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn independence_limit_shrinks_q() {
        let q_norm = |n: usize| {
            let rng = CounterRng::new(3, 9);
            let dims = Dims::new(n, 1);
            let xs = (0..n as u64).map(|i| rng.normal(2 * i)).collect();
            let ys = (0..n as u64).map(|i| rng.normal(2 * i + 1)).collect();
            let m = fit_hacd(&stack(dims, 1, xs), &stack(dims, 1, ys), Ridge::none()).unwrap();
            m.quadratic_form()
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()))
        };
        let small = q_norm(100);
        let large = q_norm(100_000);
        assert!(large < small, "{large} !< {small}");
        assert!(large < 0.02, "{large}");
    }

    #[test]
    fn too_few_pixels_is_singular_without_ridge() {
        let dims = Dims::new(2, 1);
        let x = stack(dims, 1, vec![0.0, 1.0]);
        let y = stack(dims, 1, vec![1.0, 3.0]);
        assert!(matches!(
            fit_hacd(&x, &y, Ridge::none()),
            Err(Error::SingularCovariance { .. })
        ));
        assert!(fit_hacd(&x, &y, Ridge::default()).is_ok());
        let one = Dims::new(1, 1);
        assert!(matches!(
            fit_hacd(
                &stack(one, 1, vec![2.0]),
                &stack(one, 1, vec![5.0]),
                Ridge::none()
            ),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = stack(Dims::new(3, 1), 1, vec![0.0, 1.0, 2.0]);
        let b = stack(Dims::new(1, 3), 1, vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            fit_hacd(&a, &b, Ridge::default()),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn zero_cross_covariance_scores_zero() {
        let m = model_1d(2.0, 0.5, 0.0);
        assert!(m.quadratic_form().iter().all(|&q| q == 0.0));
        assert_eq!(m.log_det_const(), 0.0);
        for (x, y) in [(0.0, 0.0), (3.0, -7.0), (1e3, 2e-3)] {
            assert_eq!(hacd_score(&m, &[x], &[y]).unwrap(), 0.0);
        }
    }

    /// `-ln` of a bivariate-normal density ratio, evaluated from the
    /// closed-form densities.
    fn density_ratio_oracle(vx: f64, vy: f64, c: f64, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        let det = vx * vy - c * c;
        let q = (vy * x * x - 2.0 * c * x * y + vx * y * y) / det;
        let p12 = (-0.5 * q).exp() / (2.0 * PI * det.sqrt());
        let p1 = (-0.5 * x * x / vx).exp() / (2.0 * PI * vx).sqrt();
        let p2 = (-0.5 * y * y / vy).exp() / (2.0 * PI * vy).sqrt();
        -(p12 / (p1 * p2)).ln()
    }

    #[test]
    fn score_at_origin_is_half_log_det_ratio() {
        let m = model_1d(1.0, 1.0, 0.5);
        let s = hacd_score(&m, &[0.0], &[0.0]).unwrap();
        assert!((s - 0.5 * 0.75f64.ln()).abs() < 1e-12, "{s}");
        assert!((s - -0.143841).abs() < 1e-6);
        assert!((s - density_ratio_oracle(1.0, 1.0, 0.5, 0.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn score_matches_density_oracle_off_axis() {
        let m = model_1d(1.0, 1.0, 0.5);
        let s = hacd_score(&m, &[2.0], &[-2.0]).unwrap();
        let oracle = density_ratio_oracle(1.0, 1.0, 0.5, 2.0, -2.0);
        assert!((s - oracle).abs() < 1e-9, "{s} vs {oracle}");
    }

    #[test]
    fn score_dimension_checks() {
        let m = model_1d(1.0, 1.0, 0.5);
        assert!(matches!(
            hacd_score(&m, &[0.0, 1.0], &[0.0]),
            Err(Error::FeatureDimension { .. })
        ));
        let s2 = stack(Dims::new(1, 1), 2, vec![0.0, 0.0]);
        let s1 = stack(Dims::new(1, 1), 1, vec![0.0]);
        assert!(matches!(
            score_map(&m, &s2, &s1),
            Err(Error::FeatureDimension { .. })
        ));
    }

    #[test]
    fn single_pixel_map_matches_point_score() {
        let m = model_1d(1.0, 2.0, 0.3);
        let one = Dims::new(1, 1);
        let map = score_map(&m, &stack(one, 1, vec![0.7]), &stack(one, 1, vec![-1.1])).unwrap();
        assert_eq!(map.scores(), &[hacd_score(&m, &[0.7], &[-1.1]).unwrap()]);
    }

    #[test]
    fn score_map_is_thread_count_independent() {
        let (x, y) = bivariate(4096, 0.8, 11);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let m = fit_hacd(&x, &y, Ridge::default()).unwrap();
                    score_map(&m, &x, &y).unwrap()
                })
        };
        let a = run(1);
        for t in [2, 4, 16] {
            assert_eq!(run(t), a);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (x, y) = bivariate(500, 0.4, 5);
        let m = fit_hacd(&x, &y, Ridge::default()).unwrap();
        let back = HacdModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(HacdModel::from_json("{}").is_err());
        assert!(HacdModel::from_json(
            r#"{"format":"acdkit-hacd-1","dim_x":1,"dim_y":1,"mean_x":[0],"mean_y":[0],"covariance":[1,2,0,1],"ridge":0}"#
        )
        .is_err());
    }

    #[test]
    fn masked_fit_uses_selected_pixels_only() {
        let (x, y) = bivariate(1000, 0.4, 5);
        let dims = x.dims();
        let mask = Mask::from_fn(dims, |i, _| i < 600);
        let m = fit_hacd_masked(&x, &y, Ridge::none(), &mask).unwrap();
        let head = |s: &FeatureStack| {
            FeatureStack::new(Dims::new(600, 1), 1, s.data()[..600].to_vec()).unwrap()
        };
        let direct = fit_hacd(&head(&x), &head(&y), Ridge::none()).unwrap();
        assert_eq!(m.covariance(), direct.covariance());
    }

    #[test]
    fn ridge_parsing() {
        assert_eq!("1e-6".parse::<Ridge>().unwrap(), Ridge::TraceScaled(1e-6));
        assert_eq!("abs:0.5".parse::<Ridge>().unwrap(), Ridge::Absolute(0.5));
        assert!("-1".parse::<Ridge>().is_err());
        assert!("abs:x".parse::<Ridge>().is_err());
    }

    #[test]
    fn diff_examples() {
        let a = Raster::new(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Raster::new(2, 1, vec![3.0, 1.0]).unwrap();
        let fwd = diff_score(&make_pair(a.clone(), b.clone()).unwrap());
        assert_eq!(fwd.scores(), &[2.0, 1.0]);
        let back = diff_score(&make_pair(b, a.clone()).unwrap());
        assert_eq!(fwd, back);
        let same = diff_score(&make_pair(a.clone(), a).unwrap());
        assert!(same.scores().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identity_features_feed_the_fit() {
        let a = Raster::new(4, 1, vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let b = Raster::new(4, 1, vec![2.0, 2.5, 4.0, 4.0]).unwrap();
        let m = fit_hacd(
            &identity_features(&a),
            &identity_features(&b),
            Ridge::none(),
        )
        .unwrap();
        assert_eq!(m.mean_x(), &[2.75]);
        assert_eq!(m.mean_y(), &[3.125]);
    }
}
