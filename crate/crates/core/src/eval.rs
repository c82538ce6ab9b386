//! Dual-mask ROC evaluation.
//!
//! Truth comes as an inner mask (surely part of the target) and an outer
//! mask (covers all of it). Both curves share the same negatives, the
//! complement of the outer mask. The outer curve counts every outer pixel
//! as positive; the inner curve counts only inner pixels and ignores the
//! ambiguous ring `outer \ inner`. The true curve lies between the two.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hacd::AnomalyMap;
use crate::raster::GroundTruth;

pub const DEFAULT_FPR_MAX: f64 = 0.01;
pub const DEFAULT_FPR_FLOOR: f64 = 1e-5;
pub const CSV_HEADER: &str = "threshold,fpr_inner,tpr_inner,fpr_outer,tpr_outer";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Pixels with `score >= threshold` are flagged.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve sorted by descending threshold. The first point (threshold
/// `+inf`) is `(0, 0)` and the last is `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocBand {
    pub inner: RocCurve,
    pub outer: RocCurve,
    pub fpr_max: f64,
    pub pauc_inner: f64,
    pub pauc_outer: f64,
}

impl RocBand {
    pub fn auc_inner(&self) -> f64 {
        auc(&self.inner)
    }

    pub fn auc_outer(&self) -> f64 {
        auc(&self.outer)
    }

    /// Rows aligned on the shared thresholds.
    pub fn rows(&self) -> Vec<RocRow> {
        self.inner
            .points
            .iter()
            .zip(&self.outer.points)
            .map(|(i, o)| RocRow {
                threshold: i.threshold,
                fpr_inner: i.fpr,
                tpr_inner: i.tpr,
                fpr_outer: o.fpr,
                tpr_outer: o.tpr,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocRow {
    pub threshold: f64,
    pub fpr_inner: f64,
    pub tpr_inner: f64,
    pub fpr_outer: f64,
    pub tpr_outer: f64,
}

pub fn roc(map: &AnomalyMap, gt: &GroundTruth) -> Result<RocBand> {
    roc_with_fpr_max(map, gt, DEFAULT_FPR_MAX)
}

/// Builds both curves over the distinct score values of the map. Pixels
/// with equal scores change class together.
pub fn roc_with_fpr_max(map: &AnomalyMap, gt: &GroundTruth, fpr_max: f64) -> Result<RocBand> {
    if map.dims() != gt.dims() {
        return Err(Error::GridMismatch {
            a: map.dims(),
            b: gt.dims(),
        });
    }
    check_fpr_max(fpr_max)?;
    let inner = gt.inner().bits();
    let outer = gt.outer().bits();
    let n_inner = inner.iter().filter(|&&b| b).count();
    let n_outer = outer.iter().filter(|&&b| b).count();
    let n_neg = outer.len() - n_outer;
    if n_inner == 0 {
        return Err(Error::EmptyClass("inner mask has no positive pixels"));
    }
    if n_outer == 0 {
        return Err(Error::EmptyClass("outer mask has no positive pixels"));
    }
    if n_neg == 0 {
        return Err(Error::EmptyClass(
            "no negative pixels outside the outer mask",
        ));
    }

    let scores = map.scores();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let start = RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    };
    let mut inner_pts = vec![start];
    let mut outer_pts = vec![start];
    let (mut tp_inner, mut tp_outer, mut fp) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            let p = order[i];
            if outer[p] {
                tp_outer += 1;
                if inner[p] {
                    tp_inner += 1;
                }
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fpr = fp as f64 / n_neg as f64;
        inner_pts.push(RocPoint {
            threshold,
            fpr,
            tpr: tp_inner as f64 / n_inner as f64,
        });
        outer_pts.push(RocPoint {
            threshold,
            fpr,
            tpr: tp_outer as f64 / n_outer as f64,
        });
    }

    let inner = RocCurve {
        points: inner_pts,
        positives: n_inner,
        negatives: n_neg,
    };
    let outer = RocCurve {
        points: outer_pts,
        positives: n_outer,
        negatives: n_neg,
    };
    Ok(RocBand {
        pauc_inner: pauc(&inner, fpr_max),
        pauc_outer: pauc(&outer, fpr_max),
        inner,
        outer,
        fpr_max,
    })
}

fn check_fpr_max(fpr_max: f64) -> Result<()> {
    if fpr_max > 0.0 && fpr_max <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadConfig(format!(
            "fpr_max must be in (0, 1], got {fpr_max}"
        )))
    }
}

/// Trapezoidal area under the curve for `fpr <= fpr_max`, interpolating
/// linearly where the curve crosses `fpr_max`. A perfect detector scores
/// `fpr_max`.
pub fn pauc(curve: &RocCurve, fpr_max: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr >= fpr_max {
            break;
        }
        if b.fpr <= fpr_max {
            area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
        } else {
            let t = (fpr_max - a.fpr) / (b.fpr - a.fpr);
            let tpr = a.tpr + t * (b.tpr - a.tpr);
            area += (fpr_max - a.fpr) * (a.tpr + tpr) * 0.5;
            break;
        }
    }
    area
}

pub fn auc(curve: &RocCurve) -> f64 {
    pauc(curve, 1.0)
}

pub fn roc_csv_string(band: &RocBand) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in band.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.threshold, r.fpr_inner, r.tpr_inner, r.fpr_outer, r.tpr_outer
        );
    }
    out
}

pub fn write_roc_csv(band: &RocBand, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, roc_csv_string(band)).map_err(|e| Error::write(path, e))
}

pub fn parse_roc_csv(text: &str) -> Result<Vec<RocRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => return Err(Error::Format(format!("bad ROC CSV header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {n}: {e}")))?;
            let [threshold, fpr_inner, tpr_inner, fpr_outer, tpr_outer] = v[..] else {
                return Err(Error::Format(format!("row {n}: expected 5 fields")));
            };
            Ok(RocRow {
                threshold,
                fpr_inner,
                tpr_inner,
                fpr_outer,
                tpr_outer,
            })
        })
        .collect()
}

pub fn read_roc_csv(path: impl AsRef<Path>) -> Result<Vec<RocRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_roc_csv(&text)
}

const PALETTE: [&str; 6] = [
    "#1f5fd1", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

struct Axes {
    log_floor: f64,
}

impl Axes {
    fn x(&self, fpr: f64) -> f64 {
        let t = (fpr.max(10f64.powf(self.log_floor)).log10() - self.log_floor) / -self.log_floor;
        MARGIN_L + t.clamp(0.0, 1.0) * (SVG_W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, tpr: f64) -> f64 {
        let t = (tpr.max(10f64.powf(self.log_floor)).log10() - self.log_floor) / -self.log_floor;
        SVG_H - MARGIN_B - t.clamp(0.0, 1.0) * (SVG_H - MARGIN_T - MARGIN_B)
    }

    /// Curve in pixel space with consecutive duplicates dropped.
    fn trace(&self, curve: &RocCurve) -> Vec<(String, String)> {
        let mut pts: Vec<(String, String)> = Vec::new();
        for p in &curve.points {
            let xy = (
                format!("{:.2}", self.x(p.fpr)),
                format!("{:.2}", self.y(p.tpr)),
            );
            if pts.last() != Some(&xy) {
                pts.push(xy);
            }
        }
        pts
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Log-log ROC plot; each band is drawn as its inner and outer curves with
/// the region between them shaded. Rates below `fpr_floor` are clipped to
/// it on both axes.
pub fn loglog_svg_string(bands: &[(String, RocBand)], fpr_floor: f64) -> Result<String> {
    if bands.is_empty() {
        return Err(Error::BadConfig("nothing to plot".into()));
    }
    if !(fpr_floor > 0.0 && fpr_floor < 1.0) {
        return Err(Error::BadConfig(format!(
            "fpr_floor must be in (0, 1), got {fpr_floor}"
        )));
    }
    let axes = Axes {
        log_floor: fpr_floor.log10(),
    };
    let (x0, x1) = (MARGIN_L, SVG_W - MARGIN_R);
    let (y0, y1) = (SVG_H - MARGIN_B, MARGIN_T);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>"#
    );

    let _ = writeln!(s, r#"<g id="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let lo = axes.log_floor.ceil() as i32;
    for e in lo..=0 {
        let v = 10f64.powi(e);
        let (tx, ty) = (axes.x(v), axes.y(v));
        let _ = writeln!(
            s,
            r##"<line x1="{tx:.2}" y1="{y0}" x2="{tx:.2}" y2="{y1}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{ty:.2}" x2="{x1}" y2="{ty:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle" stroke="none">1e{e}</text>"#,
            y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">1e{e}</text>"#,
            x0 - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">false positive rate</text>"#,
        (x0 + x1) / 2.0,
        SVG_H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">true positive rate</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (k, (name, band)) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let inner = axes.trace(&band.inner);
        let outer = axes.trace(&band.outer);
        let join = |pts: &[(String, String)]| {
            pts.iter()
                .map(|(x, y)| format!("{x},{y}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut ring: Vec<(String, String)> = inner.clone();
        ring.extend(outer.iter().rev().cloned());
        let _ = writeln!(s, r#"<g id="band-{k}">"#);
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            join(&ring)
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            join(&inner)
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="4 3"/>"#,
            join(&outer)
        );
        let ly = MARGIN_T + 10.0 + 18.0 * k as f64;
        let lx = x1 + 14.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="8" fill="{color}"/>"#,
            ly - 7.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 20.0,
            escape(name)
        );
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn render_loglog_svg(
    bands: &[(String, RocBand)],
    path: impl AsRef<Path>,
    fpr_floor: f64,
) -> Result<()> {
    let path = path.as_ref();
    let text = loglog_svg_string(bands, fpr_floor)?;
    fs::write(path, text).map_err(|e| Error::write(path, e))
}
