//! Batch harness: corrupt, restore and score over a grid of images, noise
//! levels, methods and seeds.
//!
//! A cell is one `(image, sigma, level, seed)` combination. All methods in a
//! cell see the same corrupted image, generated with
//! `derive_seed(seed, [image_index, sigma_index, level_index])`. Cells run in
//! parallel; every solve inside a cell is single-threaded and rows are sorted
//! into config order before writing, so output does not depend on scheduling.
//!
//! Methods with a parameter grid are run once per grid value and the row
//! keeps the value with the highest PSNR (first on ties), recorded in the
//! `param` column.
//!
//! Per-run CSV columns:
//! `image,sigma,level,impulse,method,seed,param,psnr,recall,precision,outer_iterations,final_energy,wall_ms`.
//! Aggregate CSV columns (mean over seeds):
//! `image,sigma,level,impulse,method,runs,psnr,recall,precision,outer_iterations,final_energy,wall_ms`.
//! Cells that do not apply to a method are left empty; `wall_ms` is empty
//! unless `timing = true`.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::blind::{solve_aop, solve_penalty, two_stage, Detector, SolverConfig};
use crate::config::KeyValueConfig;
use crate::error::{Error, Result};
use crate::filters::{AcwmfConfig, AmfConfig};
use crate::image::{DynamicRange, Image, Mask};
use crate::metrics::{detection_stats, psnr};
use crate::noise::{impulse_count, ImpulseKind, NoiseSpec};
use crate::pgm::read_pgm;
use crate::rng::derive_seed;
use crate::synthetic::test_pattern;
use crate::tv_solver::{tvl1_denoise, tvl1_objective, InnerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Noisy,
    Amf,
    Acwmf,
    Tvl1,
    TwoStage,
    Aop,
    Penalty,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Noisy => "noisy",
            Method::Amf => "amf",
            Method::Acwmf => "acwmf",
            Method::Tvl1 => "tvl1",
            Method::TwoStage => "two-stage",
            Method::Aop => "aop",
            Method::Penalty => "penalty",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "noisy" => Method::Noisy,
            "amf" => Method::Amf,
            "acwmf" => Method::Acwmf,
            "tvl1" => Method::Tvl1,
            "two-stage" => Method::TwoStage,
            "aop" => Method::Aop,
            "penalty" => Method::Penalty,
            other => return Err(Error::invalid(format!("unknown method `{other}`"))),
        })
    }
}

/// Initial mask source for the blind solvers and the two-stage detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitChoice {
    /// AMF for salt-and-pepper noise, ACWMF otherwise.
    Auto,
    Amf,
    Acwmf,
    Ones,
}

impl FromStr for InitChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => InitChoice::Auto,
            "amf" => InitChoice::Amf,
            "acwmf" => InitChoice::Acwmf,
            "ones" => InitChoice::Ones,
            other => return Err(Error::invalid(format!("unknown init `{other}`"))),
        })
    }
}

impl InitChoice {
    pub fn detector(self, impulse: ImpulseKind) -> Detector<f64> {
        match (self, impulse) {
            (InitChoice::Amf, _) | (InitChoice::Auto, ImpulseKind::SaltPepper) => Detector::Amf(AmfConfig::default()),
            (InitChoice::Acwmf, _) | (InitChoice::Auto, _) => Detector::Acwmf(AcwmfConfig::default()),
            (InitChoice::Ones, _) => Detector::Ones,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    /// The built-in test pattern.
    Synthetic,
    Path(PathBuf),
}

impl ImageSource {
    pub fn name(&self) -> String {
        match self {
            ImageSource::Synthetic => "synthetic".into(),
            ImageSource::Path(p) => p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Load, center-cropped to `crop x crop` when given. The synthetic
    /// pattern is generated at the crop size (default 128).
    pub fn load(&self, crop: Option<usize>) -> Result<Image<f64>> {
        match self {
            ImageSource::Synthetic => {
                let side = crop.unwrap_or(128);
                Ok(test_pattern(side, side))
            }
            ImageSource::Path(p) => {
                let im = read_pgm(p)?;
                Ok(match crop {
                    Some(side) => im.center_crop(side, side),
                    None => im,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub images: Vec<ImageSource>,
    pub crop: Option<usize>,
    pub impulse: ImpulseKind,
    pub sigmas: Vec<f64>,
    pub levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub clip: bool,
    pub init: InitChoice,
    pub aop_lambda1: Vec<f64>,
    pub penalty_lambda1: Vec<f64>,
    pub penalty_lambda2: Vec<f64>,
    pub two_stage_lambda1: Vec<f64>,
    pub tvl1_lambda: Vec<f64>,
    pub max_outer: usize,
    pub epsilon: Option<f64>,
    pub inner: InnerConfig<f64>,
    /// Fill the `wall_ms` column. Off by default so output is byte-reproducible.
    pub timing: bool,
    /// Score the 8-bit rounded output rather than the raw estimate.
    pub quantize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lambda1 = vec![0.5, 1.0, 2.0, 4.0, 8.0];
        Self {
            images: vec![ImageSource::Synthetic],
            crop: None,
            impulse: ImpulseKind::SaltPepper,
            sigmas: vec![0.0],
            levels: vec![0.3],
            methods: vec![Method::Noisy, Method::Amf, Method::Tvl1, Method::Aop],
            seeds: vec![1],
            clip: false,
            init: InitChoice::Auto,
            aop_lambda1: lambda1.clone(),
            penalty_lambda1: lambda1.clone(),
            penalty_lambda2: vec![450.0],
            two_stage_lambda1: lambda1,
            tvl1_lambda: vec![0.4, 0.5, 0.6, 0.8, 1.0],
            max_outer: 50,
            epsilon: None,
            inner: InnerConfig::default(),
            timing: false,
            quantize: true,
        }
    }
}

impl ExperimentConfig {
    /// Build from a key-value file. `lambda1` sets the default grid for
    /// `aop.lambda1`, `penalty.lambda1` and `two-stage.lambda1`.
    pub fn from_kv(kv: &KeyValueConfig) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(images) = kv.list::<String>("images")? {
            cfg.images = images
                .into_iter()
                .map(|s| if s == "synthetic" { ImageSource::Synthetic } else { ImageSource::Path(s.into()) })
                .collect();
        }
        cfg.crop = kv.get("crop")?.or(cfg.crop);
        cfg.impulse = kv.get_or("impulse", cfg.impulse)?;
        cfg.sigmas = kv.list("sigmas")?.unwrap_or(cfg.sigmas);
        cfg.levels = kv.list("levels")?.unwrap_or(cfg.levels);
        cfg.methods = kv.list("methods")?.unwrap_or(cfg.methods);
        cfg.seeds = kv.list("seeds")?.unwrap_or(cfg.seeds);
        cfg.clip = kv.get_or("clip", cfg.clip)?;
        cfg.init = kv.get_or("init", cfg.init)?;
        if let Some(grid) = kv.list::<f64>("lambda1")? {
            cfg.aop_lambda1 = grid.clone();
            cfg.penalty_lambda1 = grid.clone();
            cfg.two_stage_lambda1 = grid;
        }
        cfg.aop_lambda1 = kv.list("aop.lambda1")?.unwrap_or(cfg.aop_lambda1);
        cfg.penalty_lambda1 = kv.list("penalty.lambda1")?.unwrap_or(cfg.penalty_lambda1);
        cfg.penalty_lambda2 = kv.list("penalty.lambda2")?.unwrap_or(cfg.penalty_lambda2);
        cfg.two_stage_lambda1 = kv.list("two-stage.lambda1")?.unwrap_or(cfg.two_stage_lambda1);
        cfg.tvl1_lambda = kv.list("tvl1.lambda")?.unwrap_or(cfg.tvl1_lambda);
        cfg.max_outer = kv.get_or("max_outer", cfg.max_outer)?;
        cfg.epsilon = kv.get("epsilon")?.or(cfg.epsilon);
        if let Some(mu) = kv.get("mu")? {
            cfg.inner.mu = Some(mu);
        }
        cfg.inner.max_bregman = kv.get_or("max_bregman", cfg.inner.max_bregman)?;
        cfg.inner.gs_sweeps = kv.get_or("gs_sweeps", cfg.inner.gs_sweeps)?;
        cfg.inner.rel_tol = kv.get_or("rel_tol", cfg.inner.rel_tol)?;
        cfg.timing = kv.get_or("timing", cfg.timing)?;
        cfg.quantize = kv.get_or("quantize", cfg.quantize)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::invalid(format!("`{name}` must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("images", self.images.len())?;
        nonempty("sigmas", self.sigmas.len())?;
        nonempty("levels", self.levels.len())?;
        nonempty("seeds", self.seeds.len())?;
        if self.crop == Some(0) {
            return Err(Error::invalid("crop must be positive"));
        }
        if let Some(&s) = self.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("sigma {s} must be finite and non-negative")));
        }
        if let Some(&s) = self.levels.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("impulse level {s} outside [0, 1]")));
        }
        let grids = [
            (Method::Aop, "aop.lambda1", &self.aop_lambda1),
            (Method::Penalty, "penalty.lambda1", &self.penalty_lambda1),
            (Method::Penalty, "penalty.lambda2", &self.penalty_lambda2),
            (Method::TwoStage, "two-stage.lambda1", &self.two_stage_lambda1),
            (Method::Tvl1, "tvl1.lambda", &self.tvl1_lambda),
        ];
        for (method, name, grid) in grids {
            if !self.methods.contains(&method) {
                continue;
            }
            nonempty(name, grid.len())?;
            if let Some(v) = grid.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!("`{name}` value {v} must be positive")));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be positive"));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub image: String,
    pub sigma: f64,
    pub level: f64,
    pub impulse: ImpulseKind,
    pub method: Method,
    pub seed: u64,
    pub param: String,
    pub psnr: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub final_energy: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Position in config order, used for sorting.
    key: [usize; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub image: String,
    pub sigma: f64,
    pub level: f64,
    pub impulse: ImpulseKind,
    pub method: Method,
    pub runs: usize,
    pub psnr: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub outer_iterations: Option<f64>,
    pub final_energy: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub aggregate: Vec<AggregateRow>,
}

struct Outcome {
    image: Image<f64>,
    param: String,
    mask: Option<Mask>,
    outer_iterations: Option<usize>,
    final_energy: Option<f64>,
}

struct Cell<'a> {
    clean: &'a Image<f64>,
    noisy: Image<f64>,
    truth: Mask,
    level: f64,
}

fn argmax<T>(candidates: impl IntoIterator<Item = Result<(f64, T)>>) -> Result<T> {
    let mut best: Option<(f64, T)> = None;
    for c in candidates {
        let (score, value) = c?;
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, value));
        }
    }
    best.map(|(_, v)| v).ok_or_else(|| Error::invalid("empty parameter grid"))
}

impl ExperimentConfig {
    fn score(&self, estimate: &Image<f64>, clean: &Image<f64>) -> Result<f64> {
        if self.quantize {
            psnr(&estimate.quantized(), clean)
        } else {
            psnr(estimate, clean)
        }
    }

    fn solver(&self, base: SolverConfig<f64>) -> SolverConfig<f64> {
        SolverConfig {
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            inner: self.inner,
            certify: false,
            ..base
        }
    }

    fn run_method(&self, method: Method, cell: &Cell<'_>) -> Result<Outcome> {
        let f = &cell.noisy;
        let detector = self.init.detector(self.impulse);
        let pick = |grid: &[f64], name: &str, run: &dyn Fn(f64) -> Result<Outcome>| -> Result<Outcome> {
            argmax(grid.iter().map(|&p| {
                let mut out = run(p)?;
                out.param = format!("{name}={p}");
                Ok((self.score(&out.image, cell.clean)?, out))
            }))
        };
        match method {
            Method::Noisy => Ok(Outcome {
                image: f.clone(),
                param: String::new(),
                mask: None,
                outer_iterations: None,
                final_energy: None,
            }),
            Method::Amf | Method::Acwmf => {
                let det = if method == Method::Amf {
                    Detector::Amf(AmfConfig::default())
                } else {
                    Detector::Acwmf(AcwmfConfig::default())
                };
                let (image, mask) = det.detect(f)?;
                Ok(Outcome {
                    image,
                    param: String::new(),
                    mask: Some(mask),
                    outer_iterations: None,
                    final_energy: None,
                })
            }
            Method::Tvl1 => pick(&self.tvl1_lambda, "lambda", &|lambda| {
                let sol = tvl1_denoise(f, lambda, &self.inner)?;
                let energy = tvl1_objective(&sol.image, f, lambda)?;
                Ok(Outcome {
                    image: sol.image,
                    param: String::new(),
                    mask: None,
                    outer_iterations: None,
                    final_energy: Some(energy),
                })
            }),
            Method::TwoStage => pick(&self.two_stage_lambda1, "lambda1", &|lambda1| {
                let res = two_stage(f, &detector, lambda1, &self.inner)?;
                Ok(Outcome {
                    final_energy: Some(res.final_energy()),
                    outer_iterations: Some(res.outer_iterations()),
                    image: res.image,
                    mask: Some(res.mask),
                    param: String::new(),
                })
            }),
            Method::Aop => {
                let (_, mask0) = detector.detect(f)?;
                let budget = impulse_count(cell.level, f.len());
                pick(&self.aop_lambda1, "lambda1", &|lambda1| {
                    let cfg = self.solver(SolverConfig::constraint(lambda1, budget));
                    let res = solve_aop(f, &cfg, &mask0)?;
                    Ok(Outcome {
                        final_energy: Some(res.final_energy()),
                        outer_iterations: Some(res.outer_iterations()),
                        image: res.image,
                        mask: Some(res.mask),
                        param: String::new(),
                    })
                })
            }
            Method::Penalty => {
                let (_, mask0) = detector.detect(f)?;
                let grid: Vec<(f64, f64)> = self
                    .penalty_lambda1
                    .iter()
                    .flat_map(|&a| self.penalty_lambda2.iter().map(move |&b| (a, b)))
                    .collect();
                argmax(grid.iter().map(|&(lambda1, lambda2)| {
                    let cfg = self.solver(SolverConfig::penalty(lambda1, lambda2));
                    let res = solve_penalty(f, &cfg, &mask0)?;
                    let out = Outcome {
                        final_energy: Some(res.final_energy()),
                        outer_iterations: Some(res.outer_iterations()),
                        image: res.image,
                        mask: Some(res.mask),
                        param: format!("lambda1={lambda1};lambda2={lambda2}"),
                    };
                    Ok((self.score(&out.image, cell.clean)?, out))
                }))
            }
        }
    }
}

/// Run every cell and method; rows come back in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Ok(ExperimentOutput::default());
    }
    let images = cfg
        .images
        .iter()
        .map(|src| Ok((src.name(), src.load(cfg.crop)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for ii in 0..images.len() {
        for si in 0..cfg.sigmas.len() {
            for li in 0..cfg.levels.len() {
                for ki in 0..cfg.seeds.len() {
                    cells.push([ii, si, li, ki]);
                }
            }
        }
    }
    let range = DynamicRange::default();

    let mut rows: Vec<Row> = cells
        .par_iter()
        .map(|&[ii, si, li, ki]| -> Result<Vec<Row>> {
            let (name, clean) = &images[ii];
            let (sigma, level, seed) = (cfg.sigmas[si], cfg.levels[li], cfg.seeds[ki]);
            let spec = NoiseSpec {
                sigma,
                impulse: cfg.impulse,
                level,
                seed: derive_seed(seed, &[ii as u64, si as u64, li as u64]),
                clip: cfg.clip,
            };
            let (noisy, truth) = spec.apply(clean, range)?;
            let cell = Cell {
                clean,
                noisy,
                truth,
                level: if cfg.impulse == ImpulseKind::None { 0.0 } else { level },
            };
            cfg.methods
                .iter()
                .enumerate()
                .map(|(mi, &method)| {
                    let started = Instant::now();
                    let out = cfg.run_method(method, &cell)?;
                    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                    let stats = out.mask.as_ref().map(|m| detection_stats(m, &cell.truth)).transpose()?;
                    Ok(Row {
                        image: name.clone(),
                        sigma,
                        level,
                        impulse: cfg.impulse,
                        method,
                        seed,
                        param: out.param,
                        psnr: cfg.score(&out.image, clean)?,
                        recall: stats.map(|s| s.recall),
                        precision: stats.map(|s| s.precision),
                        outer_iterations: out.outer_iterations,
                        final_energy: out.final_energy,
                        wall_ms: cfg.timing.then_some(wall_ms),
                        key: [ii, si, li, mi, ki],
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<Row>>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(|r| r.key);

    let aggregate = rows
        .chunk_by(|a, b| a.key[..4] == b.key[..4])
        .map(aggregate_group)
        .collect();
    Ok(ExperimentOutput { rows, aggregate })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregate_group(group: &[Row]) -> AggregateRow {
    let first = &group[0];
    AggregateRow {
        image: first.image.clone(),
        sigma: first.sigma,
        level: first.level,
        impulse: first.impulse,
        method: first.method,
        runs: group.len(),
        psnr: mean_of(group.iter().map(|r| Some(r.psnr))).unwrap_or(f64::NAN),
        recall: mean_of(group.iter().map(|r| r.recall)),
        precision: mean_of(group.iter().map(|r| r.precision)),
        outer_iterations: mean_of(group.iter().map(|r| r.outer_iterations.map(|k| k as f64))),
        final_energy: mean_of(group.iter().map(|r| r.final_energy)),
        wall_ms: mean_of(group.iter().map(|r| r.wall_ms)),
    }
}

pub const ROW_HEADER: [&str; 13] = [
    "image",
    "sigma",
    "level",
    "impulse",
    "method",
    "seed",
    "param",
    "psnr",
    "recall",
    "precision",
    "outer_iterations",
    "final_energy",
    "wall_ms",
];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "image",
    "sigma",
    "level",
    "impulse",
    "method",
    "runs",
    "psnr",
    "recall",
    "precision",
    "outer_iterations",
    "final_energy",
    "wall_ms",
];

fn fixed(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |v| fixed(v, digits))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let kind = std::io::ErrorKind::Other;
    Error::io(path, std::io::Error::new(kind, e))
}

/// Write per-run rows as CSV.
pub fn write_rows<W: Write>(rows: &[Row], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.sigma.to_string(),
            r.level.to_string(),
            r.impulse.short_name().to_string(),
            r.method.to_string(),
            r.seed.to_string(),
            r.param.clone(),
            fixed(r.psnr, 4),
            opt(r.recall, 6),
            opt(r.precision, 6),
            r.outer_iterations.map_or_else(String::new, |k| k.to_string()),
            opt(r.final_energy, 4),
            opt(r.wall_ms, 3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.sigma.to_string(),
            r.level.to_string(),
            r.impulse.short_name().to_string(),
            r.method.to_string(),
            r.runs.to_string(),
            fixed(r.psnr, 4),
            opt(r.recall, 6),
            opt(r.precision, 6),
            opt(r.outer_iterations, 3),
            opt(r.final_energy, 4),
            opt(r.wall_ms, 3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `results.csv` -> `results_mean.csv`.
pub fn aggregate_path(rows_path: &Path) -> PathBuf {
    let stem = rows_path.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    let name = match rows_path.extension() {
        Some(ext) => format!("{stem}_mean.{}", ext.to_string_lossy()),
        None => format!("{stem}_mean"),
    };
    rows_path.with_file_name(name)
}

/// Write both CSV files; the aggregate goes next to `rows_path`.
pub fn write_outputs(output: &ExperimentOutput, rows_path: &Path) -> Result<PathBuf> {
    let file = File::create(rows_path).map_err(|e| Error::io(rows_path, e))?;
    write_rows(&output.rows, file).map_err(|e| csv_err(rows_path, e))?;
    let agg = aggregate_path(rows_path);
    let file = File::create(&agg).map_err(|e| Error::io(&agg, e))?;
    write_aggregate(&output.aggregate, file).map_err(|e| csv_err(&agg, e))?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            crop: Some(24),
            methods,
            seeds,
            aop_lambda1: vec![1.0],
            two_stage_lambda1: vec![1.0],
            tvl1_lambda: vec![0.6],
            ..ExperimentConfig::default()
        }
    }

    fn csv_text(out: &ExperimentOutput) -> (String, String) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_rows(&out.rows, &mut a).unwrap();
        write_aggregate(&out.aggregate, &mut b).unwrap();
        (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap())
    }

    #[test]
    fn empty_method_list_gives_header_only() {
        let out = run_experiment(&small(vec![], vec![1])).unwrap();
        let (rows, agg) = csv_text(&out);
        assert_eq!(rows, ROW_HEADER.join(",") + "\n");
        assert_eq!(agg, AGGREGATE_HEADER.join(",") + "\n");
    }

    #[test]
    fn noisy_row_matches_direct_evaluation() {
        let cfg = small(vec![Method::Noisy], vec![4]);
        let out = run_experiment(&cfg).unwrap();
        let clean = test_pattern::<f64>(24, 24);
        let spec = NoiseSpec {
            sigma: 0.0,
            impulse: ImpulseKind::SaltPepper,
            level: 0.3,
            seed: derive_seed(4, &[0, 0, 0]),
            clip: false,
        };
        let (g, _) = spec.apply(&clean, DynamicRange::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].psnr, psnr(&g.quantized(), &clean).unwrap());
    }

    #[test]
    fn two_seeds_one_cell_gives_mean_row() {
        let out = run_experiment(&small(vec![Method::Amf], vec![1, 2])).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.aggregate.len(), 1);
        let mean = (out.rows[0].psnr + out.rows[1].psnr) / 2.0;
        assert!((out.aggregate[0].psnr - mean).abs() < 1e-12);
        assert_eq!(out.aggregate[0].runs, 2);
    }

    #[test]
    fn row_count_and_reproducibility() {
        let mut cfg = small(vec![Method::Noisy, Method::Amf, Method::TwoStage], vec![1, 2]);
        cfg.sigmas = vec![0.0, 5.0];
        cfg.levels = vec![0.1, 0.2, 0.3];
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows.len(), 2 * 3 * 3 * 2);
        assert_eq!(a.aggregate.len(), 2 * 3 * 3);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(csv_text(&a), csv_text(&b));
    }

    #[test]
    fn grids_record_argmax() {
        let mut cfg = small(vec![Method::Tvl1], vec![1]);
        cfg.tvl1_lambda = vec![0.3, 0.6, 1.0];
        let out = run_experiment(&cfg).unwrap();
        let chosen = &out.rows[0];
        assert!(chosen.param.starts_with("lambda="));
        for lambda in [0.3, 0.6, 1.0] {
            cfg.tvl1_lambda = vec![lambda];
            let single = run_experiment(&cfg).unwrap();
            assert!(single.rows[0].psnr <= chosen.psnr);
        }
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut cfg = small(vec![Method::Noisy], vec![1]);
        cfg.levels = vec![1.5];
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small(vec![Method::Noisy], vec![]);
        cfg.seeds.clear();
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small(vec![Method::Aop], vec![1]);
        cfg.aop_lambda1 = vec![-1.0];
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small(vec![Method::Noisy], vec![1]);
        cfg.images = vec![ImageSource::Path("/nonexistent/missing.pgm".into())];
        assert!(run_experiment(&cfg).unwrap_err().is_io());
    }

    #[test]
    fn parses_key_value_config() {
        let kv = KeyValueConfig::parse(
            "images = synthetic, a/b/lena.pgm\nimpulse = rv\nsigmas = 0, 10\nlevels = 0.25\nmethods = acwmf, two-stage, aop\nseeds = 1,2,3\nlambda1 = 3\naop.lambda1 = 1, 2, 4\ntiming = true\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.images[1].name(), "lena");
        assert_eq!(cfg.impulse, ImpulseKind::RandomValued);
        assert_eq!(cfg.methods, vec![Method::Acwmf, Method::TwoStage, Method::Aop]);
        assert_eq!(cfg.aop_lambda1, vec![1.0, 2.0, 4.0]);
        assert_eq!(cfg.two_stage_lambda1, vec![3.0]);
        assert!(cfg.timing);
        let bad = KeyValueConfig::parse("methods = aop, magic\n").unwrap();
        assert!(ExperimentConfig::from_kv(&bad).is_err());
    }

    #[test]
    fn aggregate_path_appends_suffix() {
        assert_eq!(aggregate_path(Path::new("out/results.csv")), PathBuf::from("out/results_mean.csv"));
        assert_eq!(aggregate_path(Path::new("table")), PathBuf::from("table_mean"));
    }
}
