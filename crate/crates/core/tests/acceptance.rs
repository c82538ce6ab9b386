//! Acceptance suite. Runs each criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! `cargo test --test acceptance`; the target has no libtest harness, so
//! output is printed directly.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use acdkit::eval::{loglog_svg_string, roc, roc_csv_string, DEFAULT_FPR_FLOOR};
use acdkit::features::{glcm_features, FeatureStack, Offset, QuantizedRaster};
use acdkit::hacd::{fit_hacd, hacd_score, score_map, AnomalyMap, HacdModel, Ridge};
use acdkit::pipeline::{detect, Detector, DetectorParams};
use acdkit::raster::{make_pair, Dims, GroundTruth, Mask, Raster};
use acdkit::rng::CounterRng;
use acdkit::synth::{find_scene, generate_scene, Rect, SceneConfig};

type Outcome = Result<String, String>;

/// Deterministic draws for the random cases below.
struct Draws {
    rng: CounterRng,
    next: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Self {
            rng: CounterRng::new(seed, 0xACCE),
            next: 0,
        }
    }

    fn normal(&mut self) -> f64 {
        self.next += 1;
        self.rng.normal(self.next)
    }

    fn uniform(&mut self) -> f64 {
        self.next += 1;
        self.rng.uniform(self.next)
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

// ---- dense helpers for the oracles, independent of the library's Cholesky

/// Gaussian elimination with partial pivoting: returns (log|det A|, A⁻¹ b).
fn lu_logdet_solve(a: &[f64], b: &[f64], n: usize) -> (f64, Vec<f64>) {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let mut logdet = 0.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))
            .unwrap();
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        let piv = m[k * n + k];
        logdet += piv.abs().ln();
        for i in k + 1..n {
            let f = m[i * n + k] / piv;
            for c in k..n {
                m[i * n + c] -= f * m[k * n + c];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= m[k * n + c] * x[c];
        }
        x[k] = s / m[k * n + k];
    }
    (logdet, x)
}

/// log N(v; mean, cov)
fn log_density(v: &[f64], mean: &[f64], cov: &[f64]) -> f64 {
    let n = v.len();
    let d: Vec<f64> = v.iter().zip(mean).map(|(a, b)| a - b).collect();
    let (logdet, sol) = lu_logdet_solve(cov, &d, n);
    let maha: f64 = d.iter().zip(&sol).map(|(a, b)| a * b).sum();
    -0.5 * (maha + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

fn block(cov: &[f64], d: usize, start: usize, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * len);
    for r in start..start + len {
        out.extend_from_slice(&cov[r * d + start..r * d + start + len]);
    }
    out
}

/// Random SPD matrix `B Bᵀ + 0.2 I`.
fn random_spd(dr: &mut Draws, d: usize) -> Vec<f64> {
    let b: Vec<f64> = (0..d * d).map(|_| dr.normal()).collect();
    let mut c = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            c[i * d + j] = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>();
        }
        c[i * d + i] += 0.2;
    }
    c
}

// ---- criteria

fn density_ratio_oracle() -> Outcome {
    let mut dr = Draws::new(1);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let dim = 1 + case % 2;
        let d = 2 * dim;
        let cov = random_spd(&mut dr, d);
        let mean: Vec<f64> = (0..d).map(|_| dr.normal()).collect();
        let model =
            HacdModel::from_parts(mean[..dim].to_vec(), mean[dim..].to_vec(), cov.clone(), 0.0)
                .map_err(|e| format!("case {case}: {e}"))?;
        let z: Vec<f64> = (0..d).map(|i| mean[i] + 2.0 * dr.normal()).collect();
        let (x, y) = z.split_at(dim);
        let joint = log_density(&z, &mean, &cov);
        let px = log_density(x, &mean[..dim], &block(&cov, d, 0, dim));
        let py = log_density(y, &mean[dim..], &block(&cov, d, dim, dim));
        let oracle = -(joint - px - py);
        let got = hacd_score(&model, x, y).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
    }
    if worst <= 1e-9 {
        Ok(format!("max abs error {worst:.3e} over 1000 models"))
    } else {
        Err(format!("max abs error {worst:.3e} > 1e-9"))
    }
}

fn independence_zero() -> Outcome {
    let mut dr = Draws::new(2);
    let mut worst: f64 = 0.0;
    let mut inputs = 0;
    for _ in 0..100 {
        let (dx, dy) = (1 + dr.below(4), 1 + dr.below(4));
        let d = dx + dy;
        let cx = random_spd(&mut dr, dx);
        let cy = random_spd(&mut dr, dy);
        let mut cov = vec![0.0; d * d];
        for r in 0..dx {
            cov[r * d..r * d + dx].copy_from_slice(&cx[r * dx..(r + 1) * dx]);
        }
        for r in 0..dy {
            cov[(dx + r) * d + dx..(dx + r) * d + d].copy_from_slice(&cy[r * dy..(r + 1) * dy]);
        }
        let mx: Vec<f64> = (0..dx).map(|_| dr.normal()).collect();
        let my: Vec<f64> = (0..dy).map(|_| dr.normal()).collect();
        let model = HacdModel::from_parts(mx, my, cov, 0.0).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x: Vec<f64> = (0..dx).map(|_| 3.0 * dr.normal()).collect();
            let y: Vec<f64> = (0..dy).map(|_| 3.0 * dr.normal()).collect();
            worst = worst.max(hacd_score(&model, &x, &y).map_err(|e| e.to_string())?.abs());
            inputs += 1;
        }
    }
    if worst <= 1e-10 {
        Ok(format!("max |score| {worst:.3e} over {inputs} inputs"))
    } else {
        Err(format!("max |score| {worst:.3e} > 1e-10"))
    }
}

fn pauc_on_scene(name: &str, detectors: &[Detector]) -> Result<Vec<f64>, String> {
    let scene =
        generate_scene(&find_scene(name).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let gt = scene.ground_truth.clone();
    let pair = make_pair(scene.t0, scene.t1).map_err(|e| e.to_string())?;
    let params = DetectorParams::default();
    detectors
        .iter()
        .map(|&d| {
            let out = detect(d, &pair, &params, None).map_err(|e| format!("{d}: {e}"))?;
            Ok(roc(&out.map, &gt).map_err(|e| e.to_string())?.pauc_inner)
        })
        .collect()
}

fn texture_ordering() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let p = pool.install(|| pauc_on_scene("textured", &Detector::ALL))?;
    let (diff, hacd, patch, glcm) = (p[0], p[1], p[2], p[3]);
    let detail = format!("diff={diff:.5} hacd={hacd:.5} patch-hacd={patch:.5} glcm-hacd={glcm:.5}");
    let margin = 0.002;
    let ok = [patch, glcm]
        .iter()
        .all(|&v| v - diff >= margin && v - hacd >= margin);
    if ok {
        Ok(detail)
    } else {
        Err(format!("margin {margin} not met: {detail}"))
    }
}

fn low_dimensional_parity() -> Outcome {
    let p = pauc_on_scene("simple-additive", &[Detector::Diff, Detector::Hacd])?;
    let gap = (p[1] - p[0]).abs();
    let detail = format!("diff={:.5} hacd={:.5} gap={gap:.5}", p[0], p[1]);
    if gap <= 0.003 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn glcm_probability_vectors() -> Outcome {
    let mut dr = Draws::new(5);
    let mut patches = 0usize;
    let mut worst_sum: f64 = 0.0;
    let mut negatives = 0usize;
    while patches < 100_000 {
        let levels = 1 + dr.below(12);
        let patch = [1, 3, 5, 7, 9, 11][dr.below(6)];
        let (w, h) = (patch + dr.below(40), patch + dr.below(40));
        let data: Vec<u16> = (0..w * h).map(|_| dr.below(levels) as u16).collect();
        let q = QuantizedRaster::new(Dims::new(w, h), levels, data).map_err(|e| e.to_string())?;
        let all: [(i32, i32); 6] = [(0, 1), (1, 0), (1, 1), (1, -1), (0, 2), (2, -1)];
        let max_reach = (patch as i32 - 1).max(0);
        let mut offsets: Vec<Offset> = all
            .iter()
            .filter(|(dy, dx)| dy.abs() <= max_reach && dx.abs() <= max_reach)
            .filter(|_| dr.uniform() < 0.6)
            .map(|&(dy, dx)| Offset::new(dy, dx))
            .collect();
        if patch == 1 {
            continue;
        }
        if offsets.is_empty() {
            offsets.push(Offset::new(0, 1));
        }
        let f = glcm_features(&q, patch, &offsets).map_err(|e| e.to_string())?;
        for i in 0..f.pixel_count() {
            let v = f.pixel(i);
            negatives += v.iter().filter(|&&x| x.is_nan() || x < 0.0).count();
            worst_sum = worst_sum.max((v.iter().sum::<f64>() - 1.0).abs());
        }
        patches += f.pixel_count();
    }
    if negatives == 0 && worst_sum <= 1e-12 {
        Ok(format!("{patches} patches, max |sum - 1| {worst_sum:.3e}"))
    } else {
        Err(format!(
            "{negatives} negative entries, max |sum - 1| {worst_sum:.3e}"
        ))
    }
}

fn roc_correctness() -> Outcome {
    let dims = Dims::new(4, 1);
    let map = AnomalyMap::new(dims, vec![0.9, 0.8, 0.2, 0.1]).map_err(|e| e.to_string())?;
    let mask = Mask::new(dims, vec![true, true, false, false]).map_err(|e| e.to_string())?;
    let band = roc(&map, &GroundTruth::exact(mask)).map_err(|e| e.to_string())?;
    let seq: Vec<(f64, f64)> = band.inner.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    let expected = vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)];
    if seq != expected {
        return Err(format!("fixture sequence {seq:?}"));
    }
    if band.pauc_inner != 0.01 || band.pauc_outer != 0.01 {
        return Err(format!(
            "fixture pAUC {} / {}",
            band.pauc_inner, band.pauc_outer
        ));
    }

    let mut dr = Draws::new(6);
    for case in 0..1000 {
        let (w, h) = (2 + dr.below(20), 1 + dr.below(20));
        let dims = Dims::new(w, h);
        let n = w * h;
        // coarse scores so ties occur
        let levels = 1 + dr.below(50);
        let scores: Vec<f64> = (0..n).map(|_| dr.below(levels) as f64 * 0.1).collect();
        let outer: Vec<bool> = (0..n).map(|_| dr.uniform() < 0.4).collect();
        let inner: Vec<bool> = outer.iter().map(|&o| o && dr.uniform() < 0.7).collect();
        let (Ok(inner_m), Ok(outer_m)) = (Mask::new(dims, inner), Mask::new(dims, outer)) else {
            return Err("mask construction".into());
        };
        if inner_m.count() == 0 || outer_m.count() == n {
            continue;
        }
        let gt = GroundTruth::new(inner_m, outer_m).map_err(|e| e.to_string())?;
        let map = AnomalyMap::new(dims, scores).map_err(|e| e.to_string())?;
        let band = roc(&map, &gt).map_err(|e| format!("case {case}: {e}"))?;
        for curve in [&band.inner, &band.outer] {
            let pts = &curve.points;
            let monotone = pts.windows(2).all(|w| {
                w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr && w[0].threshold > w[1].threshold
            });
            let ends = (pts[0].fpr, pts[0].tpr) == (0.0, 0.0)
                && (pts[pts.len() - 1].fpr, pts[pts.len() - 1].tpr) == (1.0, 1.0);
            if !monotone || !ends {
                return Err(format!("case {case}: curve not monotone: {pts:?}"));
            }
        }
        if !(0.0..=band.fpr_max).contains(&band.pauc_inner) {
            return Err(format!(
                "case {case}: pAUC {} out of range",
                band.pauc_inner
            ));
        }
    }
    Ok("fixture exact, 1000 random maps monotone".into())
}

fn collect_files(dir: &Path, out: &mut Vec<(String, Vec<u8>)>, root: &Path) {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out, root);
        } else {
            let rel = p.strip_prefix(root).unwrap().display().to_string();
            out.push((rel, fs::read(&p).unwrap()));
        }
    }
}

fn determinism() -> Outcome {
    // library level: scene, maps, csv, svg under different pool sizes
    let cfg = SceneConfig {
        noise_sigma: 0.2,
        pervasive_gain: 1.2,
        anomaly_texture_gain: 2.5,
        speckle: true,
        ..SceneConfig::quiet(96, 80, 77, Rect::new(30, 20, 24, 24))
    };
    let library_run = |threads: usize| -> Result<Vec<Vec<u8>>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            let scene = generate_scene(&cfg).map_err(|e| e.to_string())?;
            let mut blobs = vec![
                acdkit::raster::encode_r32(&scene.t0).1,
                acdkit::raster::encode_r32(&scene.t1).1,
            ];
            let gt = scene.ground_truth.clone();
            let pair = make_pair(scene.t0, scene.t1).map_err(|e| e.to_string())?;
            let params = DetectorParams {
                patch: 5,
                ..Default::default()
            };
            let mut bands = Vec::new();
            for d in Detector::ALL {
                let out = detect(d, &pair, &params, None).map_err(|e| e.to_string())?;
                let r = out.map.to_raster().map_err(|e| e.to_string())?;
                blobs.push(acdkit::raster::encode_r32(&r).1);
                let band = roc(&out.map, &gt).map_err(|e| e.to_string())?;
                blobs.push(roc_csv_string(&band).into_bytes());
                bands.push((d.name().to_string(), band));
            }
            blobs.push(
                loglog_svg_string(&bands, DEFAULT_FPR_FLOOR)
                    .map_err(|e| e.to_string())?
                    .into_bytes(),
            );
            Ok(blobs)
        })
    };
    let reference = library_run(1)?;
    for threads in [1, 4, 16] {
        if library_run(threads)? != reference {
            return Err(format!("library outputs differ with {threads} threads"));
        }
    }

    // end to end: the CLI on a benchmark scene under ACDKIT_THREADS
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.json");
    fs::write(
        &config,
        r#"{"detectors":["diff","hacd","patch-hacd","glcm-hacd"],"scene":"textured","out":"out"}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut cli_reference: Option<Vec<(String, Vec<u8>)>> = None;
    let mut files = 0;
    for (run, threads) in ["1", "4", "16", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_acdkit"))
            .arg("run")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("ACDKIT_THREADS", threads)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let mut got = Vec::new();
        collect_files(&out, &mut got, &out);
        files = got.len();
        match &cli_reference {
            None => cli_reference = Some(got),
            Some(r) if r == &got => {}
            Some(r) => {
                let diff: Vec<&str> = r
                    .iter()
                    .zip(&got)
                    .filter(|(a, b)| a != b)
                    .map(|(a, _)| a.0.as_str())
                    .collect();
                return Err(format!("ACDKIT_THREADS={threads} changed {diff:?}"));
            }
        }
    }
    Ok(format!(
        "library outputs identical for 1/4/16 threads; {files} CLI files identical across 4 runs"
    ))
}

/// 64x64 scene, x and y features are each pixel's 2x2 neighbourhood.
fn neighbourhood_features(r: &Raster) -> FeatureStack {
    let (w, h) = (r.width(), r.height());
    let mut data = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let (x1, y1) = ((x + 1).min(w - 1), (y + 1).min(h - 1));
            data.extend([r.get(x, y), r.get(x1, y), r.get(x, y1), r.get(x1, y1)].map(f64::from));
        }
    }
    FeatureStack::new(r.dims(), 4, data).unwrap()
}

fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(s, t)| (s - t).abs() / s.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn invertible_transform_invariance() -> Outcome {
    let cfg = SceneConfig {
        noise_sigma: 0.3,
        pervasive_gain: 1.3,
        pervasive_offset: 0.2,
        anomaly_texture_gain: 2.0,
        ..SceneConfig::quiet(64, 64, 88, Rect::new(20, 24, 16, 16))
    };
    let scene = generate_scene(&cfg).map_err(|e| e.to_string())?;
    let x = neighbourhood_features(&scene.t0);
    let y = neighbourhood_features(&scene.t1);
    let base = score_map(
        &fit_hacd(&x, &y, Ridge::none()).map_err(|e| e.to_string())?,
        &x,
        &y,
    )
    .map_err(|e| e.to_string())?;

    let mut dr = Draws::new(8);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a: Vec<f64> = (0..16).map(|_| dr.normal()).collect();
        let (logdet, _) = lu_logdet_solve(&a, &[0.0; 4], 4);
        if logdet < -3.0 {
            continue; // nearly singular draw
        }
        let shift: Vec<f64> = (0..4).map(|_| 10.0 * dr.normal()).collect();
        let ax = x
            .map_pixels(4, |v, out| {
                for r in 0..4 {
                    out[r] = (0..4).map(|c| a[r * 4 + c] * v[c]).sum::<f64>() + shift[r];
                }
            })
            .map_err(|e| e.to_string())?;
        let model = fit_hacd(&ax, &y, Ridge::none()).map_err(|e| e.to_string())?;
        let moved = score_map(&model, &ax, &y).map_err(|e| e.to_string())?;
        worst = worst.max(relative_change(base.scores(), moved.scores()));
    }

    // mean shift alone
    let shifted = x.map_pixels(4, |v, out| {
        for (o, (i, s)) in out.iter_mut().zip(v.iter().zip([3.0, -7.0, 0.5, 100.0])) {
            *o = i + s;
        }
    });
    let shifted = shifted.map_err(|e| e.to_string())?;
    let m = fit_hacd(&shifted, &y, Ridge::none()).map_err(|e| e.to_string())?;
    let shift_err = relative_change(
        base.scores(),
        score_map(&m, &shifted, &y)
            .map_err(|e| e.to_string())?
            .scores(),
    );

    let detail = format!("max relative change {worst:.3e}, mean shift {shift_err:.3e}");
    if worst <= 1e-6 && shift_err <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (
            "1 density-ratio oracle",
            Some(Duration::from_secs(5)),
            density_ratio_oracle,
        ),
        (
            "2 independence zero",
            Some(Duration::from_secs(1)),
            independence_zero,
        ),
        (
            "3 texture ordering",
            Some(Duration::from_secs(60)),
            texture_ordering,
        ),
        (
            "4 low-dimensional parity",
            Some(Duration::from_secs(30)),
            low_dimensional_parity,
        ),
        ("5 glcm probability vectors", None, glcm_probability_vectors),
        ("6 roc correctness", None, roc_correctness),
        ("7 determinism", None, determinism),
        (
            "8 invertible-transform invariance",
            None,
            invertible_transform_invariance,
        ),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(msg), Some(limit)) if elapsed > limit => {
                Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
