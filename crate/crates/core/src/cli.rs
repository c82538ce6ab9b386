//! Command-line pipeline: `detect`, `eval`, `synth`, `run` and `convert`.
//!
//! Configuration is a JSON document; command-line flags override its
//! fields, and unset fields fall back to the library defaults. Relative
//! paths inside a config file resolve against the file's directory.
//!
//! Exit codes: 0 on success, 2 for user or data errors, 3 for internal
//! invariant violations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::eval::{
    render_loglog_svg, roc_with_fpr_max, write_roc_csv, RocBand, DEFAULT_FPR_FLOOR, DEFAULT_FPR_MAX,
};
use crate::features::Offset;
use crate::hacd::{AnomalyMap, HacdModel, Ridge};
use crate::pipeline::{detect, Detector, DetectorParams};
use crate::raster::{
    load_ground_truth, load_mask, load_raster, make_pair, parse_text_dump, save_mask, save_raster,
    to_text_dump,
};
use crate::synth::{find_scene, generate_scene, SceneConfig};

pub const THREADS_ENV: &str = "ACDKIT_THREADS";

/// Pipeline settings as read from a JSON config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<Detector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<Vec<Detector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glcm_levels: Option<usize>,
    /// `[[dy, dx], ...]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glcm_offsets: Option<Vec<[i32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<Ridge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_fpr_max: Option<f64>,
    /// Benchmark scene to synthesize when `t0`/`t1` are not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Fit HACD models on the pixels of this mask only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::BadConfig(format!("bad pipeline config: {e}")))
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.t0,
            &mut cfg.t1,
            &mut cfg.inner,
            &mut cfg.outer,
            &mut cfg.model,
            &mut cfg.fit_mask,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `other` replace fields in `self`.
    pub fn overridden_by(mut self, other: PipelineConfig) -> Self {
        if other.detector.is_some() && other.detectors.is_none() {
            self.detectors = None;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            detector,
            detectors,
            patch,
            glcm_levels,
            glcm_offsets,
            ridge,
            roc_fpr_max,
            scene,
            seed,
            t0,
            t1,
            inner,
            outer,
            model,
            fit_mask,
            out
        );
        self
    }

    pub fn detector_list(&self) -> Result<Vec<Detector>> {
        match (&self.detectors, self.detector) {
            (Some(list), _) if !list.is_empty() => Ok(list.clone()),
            (_, Some(d)) => Ok(vec![d]),
            _ => Err(Error::BadConfig("no detector given".into())),
        }
    }

    /// Detector parameters without the fit mask, which needs file I/O.
    pub fn params(&self) -> DetectorParams {
        let defaults = DetectorParams::default();
        DetectorParams {
            patch: self.patch.unwrap_or(defaults.patch),
            glcm_levels: self.glcm_levels.unwrap_or(defaults.glcm_levels),
            glcm_offsets: self
                .glcm_offsets
                .as_ref()
                .map(|v| v.iter().map(|&[dy, dx]| Offset::new(dy, dx)).collect())
                .unwrap_or(defaults.glcm_offsets),
            ridge: self.ridge.unwrap_or(defaults.ridge),
            fit_mask: None,
        }
    }

    pub fn fpr_max(&self) -> f64 {
        self.roc_fpr_max.unwrap_or(DEFAULT_FPR_MAX)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::BadConfig("no output directory given (--out)".into()))
    }
}

/// `"0,1;1,0;1,1;1,-1"`
pub fn parse_offsets(s: &str) -> Result<Vec<[i32; 2]>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|pair| {
            let v: Vec<i32> = pair
                .split(',')
                .map(|t| t.trim().parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::BadConfig(format!("bad offset {pair:?}")))?;
            match v[..] {
                [dy, dx] => Ok([dy, dx]),
                _ => Err(Error::BadConfig(format!("bad offset {pair:?}, want dy,dx"))),
            }
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::write(path, e))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::BadConfig(format!("missing {what} path")))
}

pub struct DetectOutput {
    pub map_path: PathBuf,
    pub model_path: Option<PathBuf>,
    pub map: AnomalyMap,
}

/// Runs one detector on `t0`/`t1` and writes `anomaly.{json,r32}` (and
/// `model.json` for the HACD detectors) into the output directory.
pub fn cmd_detect(cfg: &PipelineConfig) -> Result<DetectOutput> {
    let detectors = cfg.detector_list()?;
    let [detector] = detectors[..] else {
        return Err(Error::BadConfig(format!(
            "detect takes exactly one detector, got {}",
            detectors.len()
        )));
    };
    let out = cfg.out_dir()?;
    let t0 = load_raster(require(&cfg.t0, "t0")?)?;
    let t1 = load_raster(require(&cfg.t1, "t1")?)?;
    let pair = make_pair(t0, t1)?;
    let model = match &cfg.model {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::read(p, e))?;
            Some(HacdModel::from_json(&text)?)
        }
        None => None,
    };
    let mut params = cfg.params();
    if let Some(p) = &cfg.fit_mask {
        params.fit_mask = Some(load_mask(p)?);
    }
    let result = detect(detector, &pair, &params, model)?;
    create_dir(out)?;
    let map_path = out.join("anomaly.r32");
    save_raster(&result.map.to_raster()?, &map_path)?;
    let model_path = match &result.model {
        Some(m) => {
            let p = out.join("model.json");
            write_text(&p, &m.to_json())?;
            Some(p)
        }
        None => None,
    };
    Ok(DetectOutput {
        map_path,
        model_path,
        map: result.map,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fpr_max: f64,
    pub pauc_inner: f64,
    pub pauc_outer: f64,
    pub auc_inner: f64,
    pub auc_outer: f64,
    pub n_pos_inner: usize,
    pub n_pos_outer: usize,
    pub n_neg: usize,
}

impl Summary {
    pub fn of(band: &RocBand) -> Self {
        Self {
            fpr_max: band.fpr_max,
            pauc_inner: band.pauc_inner,
            pauc_outer: band.pauc_outer,
            auc_inner: band.auc_inner(),
            auc_outer: band.auc_outer(),
            n_pos_inner: band.inner.positives,
            n_pos_outer: band.outer.positives,
            n_neg: band.inner.negatives,
        }
    }
}

/// Evaluates a stored anomaly map against its truth masks; writes
/// `roc.csv`, `roc.svg` and `summary.json` into `out`.
pub fn cmd_eval(
    map_path: &Path,
    inner: Option<&Path>,
    outer: Option<&Path>,
    out: &Path,
    fpr_max: f64,
    label: &str,
) -> Result<(RocBand, Summary)> {
    let map = AnomalyMap::from_raster(&load_raster(map_path)?);
    let gt = load_ground_truth(inner, outer, map.dims())?;
    let band = roc_with_fpr_max(&map, &gt, fpr_max)?;
    create_dir(out)?;
    write_roc_csv(&band, out.join("roc.csv"))?;
    render_loglog_svg(
        &[(label.to_string(), band.clone())],
        out.join("roc.svg"),
        DEFAULT_FPR_FLOOR,
    )?;
    let summary = Summary::of(&band);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(&out.join("summary.json"), &text)?;
    Ok((band, summary))
}

/// Paths of a synthesized scene.
pub struct SceneFiles {
    pub t0: PathBuf,
    pub t1: PathBuf,
    pub inner: PathBuf,
    pub outer: PathBuf,
    pub config: PathBuf,
}

/// Resolves a suite scene name or a scene config path.
pub fn resolve_scene(name_or_path: &str, seed: Option<u64>) -> Result<SceneConfig> {
    let mut cfg = match find_scene(name_or_path) {
        Ok(cfg) => cfg,
        Err(unknown) => {
            let path = Path::new(name_or_path);
            if path.extension().is_some_and(|e| e == "json") || path.is_file() {
                SceneConfig::load(path)?
            } else {
                return Err(unknown);
            }
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_synth(cfg: &SceneConfig, out: &Path) -> Result<SceneFiles> {
    let scene = generate_scene(cfg)?;
    create_dir(out)?;
    let files = SceneFiles {
        t0: out.join("t0.r32"),
        t1: out.join("t1.r32"),
        inner: out.join("inner.r32"),
        outer: out.join("outer.r32"),
        config: out.join("scene.json"),
    };
    save_raster(&scene.t0, &files.t0)?;
    save_raster(&scene.t1, &files.t1)?;
    save_mask(scene.ground_truth.inner(), &files.inner)?;
    save_mask(scene.ground_truth.outer(), &files.outer)?;
    write_text(&files.config, &cfg.to_json())?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeagueRow {
    pub detector: Detector,
    pub summary: Summary,
}

pub const LEAGUE_HEADER: &str = "rank,detector,pauc_inner,pauc_outer,auc_inner,auc_outer";

/// Detect and evaluate every configured detector, then write a combined
/// `roc.svg` and `league.csv` ranked by inner partial AUC.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<Vec<LeagueRow>> {
    let out = cfg.out_dir()?.to_path_buf();
    let detectors = cfg.detector_list()?;
    let mut cfg = cfg.clone();
    if cfg.t0.is_none() || cfg.t1.is_none() {
        let Some(name) = cfg.scene.clone() else {
            return Err(Error::BadConfig("run needs t0/t1 paths or a scene".into()));
        };
        let scene = resolve_scene(&name, cfg.seed)?;
        let files = cmd_synth(&scene, &out.join("scene")).context(|| format!("scene {name}"))?;
        cfg.t0 = Some(files.t0);
        cfg.t1 = Some(files.t1);
        cfg.inner.get_or_insert(files.inner);
        cfg.outer.get_or_insert(files.outer);
    }
    if cfg.inner.is_none() && cfg.outer.is_none() {
        return Err(Error::BadConfig(
            "run needs an inner and/or outer mask".into(),
        ));
    }

    let mut bands = Vec::new();
    let mut rows = Vec::new();
    for d in detectors {
        let dir = out.join(d.name());
        let single = PipelineConfig {
            detector: Some(d),
            detectors: None,
            out: Some(dir.clone()),
            ..cfg.clone()
        };
        let det = cmd_detect(&single).context(|| format!("detector {d}"))?;
        let (band, summary) = cmd_eval(
            &det.map_path,
            cfg.inner.as_deref(),
            cfg.outer.as_deref(),
            &dir,
            cfg.fpr_max(),
            d.name(),
        )
        .context(|| format!("evaluating {d}"))?;
        bands.push((d.name().to_string(), band));
        rows.push(LeagueRow {
            detector: d,
            summary,
        });
    }
    render_loglog_svg(&bands, out.join("roc.svg"), DEFAULT_FPR_FLOOR)?;
    rows.sort_by(|a, b| b.summary.pauc_inner.total_cmp(&a.summary.pauc_inner));
    let mut csv = String::from(LEAGUE_HEADER);
    csv.push('\n');
    for (rank, r) in rows.iter().enumerate() {
        let s = &r.summary;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rank + 1,
            r.detector,
            s.pauc_inner,
            s.pauc_outer,
            s.auc_inner,
            s.auc_outer
        ));
    }
    write_text(&out.join("league.csv"), &csv)?;
    Ok(rows)
}

/// Converts between R32 and the text pixel dump; a `.txt` input is parsed
/// as a dump and written as R32, anything else goes the other way.
pub fn cmd_convert(input: &Path, output: &Path) -> Result<()> {
    if input.extension().is_some_and(|e| e == "txt") {
        let text = fs::read_to_string(input).map_err(|e| Error::read(input, e))?;
        save_raster(&parse_text_dump(&text)?, output)
    } else {
        write_text(output, &to_text_dump(&load_raster(input)?))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "acdkit",
    version,
    about = "Anomalous change detection for image pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every pixel of an image pair.
    Detect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        t0: Option<PathBuf>,
        #[arg(long)]
        t1: Option<PathBuf>,
        /// Score with a previously fitted model instead of fitting.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fit on the pixels of this mask only.
        #[arg(long)]
        fit_mask: Option<PathBuf>,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// ROC band, partial AUC and plots for an anomaly map.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        inner: Option<PathBuf>,
        #[arg(long)]
        outer: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fpr_max: Option<f64>,
        /// Legend label in the plot.
        #[arg(long, default_value = "detector")]
        name: String,
    },
    /// Write a synthetic scene (suite name or scene config file).
    Synth {
        scene: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detect and evaluate every configured detector.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Convert between R32 and a plain-text pixel dump (`.txt`).
    Convert { input: PathBuf, output: PathBuf },
}

#[derive(Debug, Default, Args)]
pub struct PipelineFlags {
    /// diff, hacd, patch-hacd or glcm-hacd
    #[arg(long)]
    pub detector: Option<Detector>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Co-occurrence offsets as `dy,dx;dy,dx;...`
    #[arg(long, allow_hyphen_values = true)]
    pub offsets: Option<String>,
    /// Trace-scaled factor (`1e-6`) or absolute value (`abs:0.01`).
    #[arg(long)]
    pub ridge: Option<Ridge>,
    #[arg(long)]
    pub fpr_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl PipelineFlags {
    fn into_config(self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            detector: self.detector,
            patch: self.patch,
            glcm_levels: self.levels,
            glcm_offsets: self.offsets.as_deref().map(parse_offsets).transpose()?,
            ridge: self.ridge,
            roc_fpr_max: self.fpr_max,
            seed: self.seed,
            out: self.out,
            ..Default::default()
        })
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map(PipelineConfig::load)
        .transpose()
        .map(Option::unwrap_or_default)
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Detect {
            config,
            t0,
            t1,
            model,
            fit_mask,
            flags,
        } => {
            let cfg = load_config(config.as_deref())?.overridden_by(PipelineConfig {
                t0,
                t1,
                model,
                fit_mask,
                ..flags.into_config()?
            });
            let out = cmd_detect(&cfg)?;
            Ok(format!("wrote {}", out.map_path.display()))
        }
        Command::Eval {
            map,
            inner,
            outer,
            out,
            fpr_max,
            name,
        } => {
            let (_, s) = cmd_eval(
                &map,
                inner.as_deref(),
                outer.as_deref(),
                &out,
                fpr_max.unwrap_or(DEFAULT_FPR_MAX),
                &name,
            )?;
            Ok(format!(
                "pauc_inner={} pauc_outer={} auc_inner={} auc_outer={}",
                s.pauc_inner, s.pauc_outer, s.auc_inner, s.auc_outer
            ))
        }
        Command::Synth { scene, out, seed } => {
            let cfg = resolve_scene(&scene, seed)?;
            cmd_synth(&cfg, &out)?;
            Ok(format!("wrote scene to {}", out.display()))
        }
        Command::Run { config, flags } => {
            let cfg = PipelineConfig::load(&config)?.overridden_by(flags.into_config()?);
            let rows = cmd_run(&cfg)?;
            Ok(rows
                .iter()
                .map(|r| format!("{} pauc_inner={}", r.detector, r.summary.pauc_inner))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Convert { input, output } => {
            cmd_convert(&input, &output)?;
            Ok(format!("wrote {}", output.display()))
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Internal(_) => 3,
        _ => 2,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::BadConfig(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| execute(cli));
    match result {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("acdkit: error[{}]: {e}", e.name());
            exit_code(&e)
        }
    }
}
