use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blindpaint::config::KeyValueConfig;
use blindpaint::experiments::{run_experiment, write_outputs, ExperimentConfig, InitChoice, Method};
use blindpaint::noise::{impulse_count, simulate_mixed_nll};
use blindpaint::pgm::{read_mask_pgm, read_pgm, write_mask_pgm, write_pgm, PgmMode};
use blindpaint::{
    detection_stats, psnr, solve_aop, solve_penalty, tvl1_denoise, two_stage, DynamicRange, Error, Image64,
    ImpulseKind, InnerConfig, NoiseSpec, RestoreResult, SolverConfig, TieRule,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blindpaint", version, about = "Impulse and mixed noise removal by blind TV inpainting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Impulse {
    Sp,
    Rv,
    None,
}

impl From<Impulse> for ImpulseKind {
    fn from(k: Impulse) -> Self {
        match k {
            Impulse::Sp => ImpulseKind::SaltPepper,
            Impulse::Rv => ImpulseKind::RandomValued,
            Impulse::None => ImpulseKind::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    P2,
    P5,
}

impl From<Format> for PgmMode {
    fn from(f: Format) -> Self {
        match f {
            Format::P2 => PgmMode::Ascii,
            Format::P5 => PgmMode::Binary,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Add Gaussian and impulse noise to an image.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth mask (black = corrupted).
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "sp")]
        impulse: Impulse,
        #[arg(long, default_value_t = 0.0)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clip the Gaussian-noisy image to [0, 255].
        #[arg(long)]
        clip: bool,
        #[arg(long, value_enum, default_value = "p5")]
        format: Format,
    },
    /// Restore a noisy image.
    Denoise(DenoiseArgs),
    /// Print PSNR and detection statistics as one CSV line.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, requires = "mask_true")]
        mask_est: Option<PathBuf>,
        #[arg(long, requires = "mask_est")]
        mask_true: Option<PathBuf>,
        /// Round the test image to 8 bits before scoring.
        #[arg(long)]
        quantize: bool,
    },
    /// Run a batch experiment from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of a mixed-noise observation of one gray value.
    SimulateNll {
        #[arg(long, default_value_t = 128.0)]
        value: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Key-value file with defaults for the options below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: aop]
    #[arg(long, value_parser = ["aop", "penalty", "tvl1", "two-stage", "amf", "acwmf"])]
    method: Option<String>,
    /// TV weight (the TV-L1 weight for tvl1) [default: 2]
    #[arg(long)]
    lambda1: Option<f64>,
    /// Penalty per distrusted pixel (penalty form).
    #[arg(long)]
    lambda2: Option<f64>,
    /// Outlier budget (constraint form).
    #[arg(long = "L")]
    budget: Option<usize>,
    /// Impulse level used to set the outlier budget as round(level * M * N).
    #[arg(long)]
    level: Option<f64>,
    /// [default: amf]
    #[arg(long, value_parser = ["amf", "acwmf", "ones"])]
    init: Option<String>,
    /// Outer stop tolerance [default: 1e-4 * M * N]
    #[arg(long)]
    epsilon: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    max_outer: Option<usize>,
    /// [default: keep]
    #[arg(long, value_parser = ["keep", "drop", "rand"])]
    tie: Option<String>,
    /// Perturbation scale for --tie rand [default: 1e-6]
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Splitting weight of the inner solver [default: 0.2 * lambda1]
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_bregman: Option<usize>,
    #[arg(long)]
    gs_sweeps: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Add a wall_ms column to the trace.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "p5")]
    format: Format,
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn corrupt(
    input: &Path,
    out: &Path,
    mask_out: Option<&Path>,
    spec: NoiseSpec<f64>,
    format: Format,
) -> Result<(), Error> {
    let clean: Image64 = read_pgm(input)?;
    let (noisy, mask) = spec.apply(&clean, DynamicRange::default())?;
    write_pgm(&noisy, out, format.into())?;
    if let Some(path) = mask_out {
        write_mask_pgm(&mask, path)?;
    }
    Ok(())
}

/// Merge `--config` with flags, flags taking precedence.
fn denoise_settings(args: &DenoiseArgs) -> Result<KeyValueConfig, Error> {
    let mut kv = match &args.config {
        Some(path) => KeyValueConfig::load(path)?,
        None => KeyValueConfig::default(),
    };
    let flags: [(&str, Option<String>); 15] = [
        ("method", args.method.clone()),
        ("lambda1", args.lambda1.map(|v| v.to_string())),
        ("lambda2", args.lambda2.map(|v| v.to_string())),
        ("L", args.budget.map(|v| v.to_string())),
        ("level", args.level.map(|v| v.to_string())),
        ("init", args.init.clone()),
        ("epsilon", args.epsilon.map(|v| v.to_string())),
        ("max_outer", args.max_outer.map(|v| v.to_string())),
        ("tie", args.tie.clone()),
        ("tau", args.tau.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("mu", args.mu.map(|v| v.to_string())),
        ("max_bregman", args.max_bregman.map(|v| v.to_string())),
        ("gs_sweeps", args.gs_sweeps.map(|v| v.to_string())),
        ("rel_tol", args.rel_tol.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            kv.set(key, v);
        }
    }
    Ok(kv)
}

fn write_trace(path: &Path, res: &RestoreResult<f64>, timing: bool) -> Result<(), Error> {
    let mut text = String::from("iteration,energy_after_image_step,energy,mask_changes,inner_iterations,image_digest");
    text.push_str(if timing { ",wall_ms\n" } else { "\n" });
    for r in &res.trace {
        text.push_str(&format!(
            "{},{:.6},{:.6},{},{},{:016x}",
            r.iteration, r.energy_after_image_step, r.energy, r.mask_changes, r.inner_iterations, r.image_digest
        ));
        if timing {
            text.push_str(&format!(",{:.3}", r.wall_time.as_secs_f64() * 1e3));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn denoise(args: &DenoiseArgs) -> Result<(), Error> {
    let kv = denoise_settings(args)?;
    let f: Image64 = read_pgm(&args.input)?;
    let method: Method = kv.get_or("method", Method::Aop)?;
    let lambda1: f64 = kv.get_or("lambda1", 2.0)?;
    let init: InitChoice = kv.get_or("init", InitChoice::Amf)?;
    let detector = init.detector(ImpulseKind::SaltPepper);
    let mut inner = InnerConfig::<f64>::default();
    inner.mu = kv.get("mu")?;
    inner.max_bregman = kv.get_or("max_bregman", inner.max_bregman)?;
    inner.gs_sweeps = kv.get_or("gs_sweeps", inner.gs_sweeps)?;
    inner.rel_tol = kv.get_or("rel_tol", inner.rel_tol)?;
    let seed: u64 = kv.get_or("seed", 0)?;
    let tie = match kv.get_or("tie", String::from("keep"))?.as_str() {
        "keep" => TieRule::Keep,
        "drop" => TieRule::Drop,
        "rand" => TieRule::Randomized {
            tau: kv.get_or("tau", 1e-6)?,
            seed,
        },
        other => return Err(Error::InvalidArgument(format!("unknown tie rule `{other}`"))),
    };

    let blind_config = |base: SolverConfig<f64>| -> Result<SolverConfig<f64>, Error> {
        Ok(SolverConfig {
            epsilon: kv.get("epsilon")?,
            max_outer: kv.get_or("max_outer", 50)?,
            inner,
            tie_rule: tie,
            ..base
        })
    };

    let (image, mask, result) = match method {
        Method::Noisy => (f.clone(), None, None),
        Method::Amf | Method::Acwmf => {
            let det = if method == Method::Amf {
                InitChoice::Amf.detector(ImpulseKind::SaltPepper)
            } else {
                InitChoice::Acwmf.detector(ImpulseKind::RandomValued)
            };
            let (image, mask) = det.detect(&f)?;
            (image, Some(mask), None)
        }
        Method::Tvl1 => (tvl1_denoise(&f, lambda1, &inner)?.image, None, None),
        Method::TwoStage => {
            let res = two_stage(&f, &detector, lambda1, &inner)?;
            (res.image.clone(), Some(res.mask.clone()), Some(res))
        }
        Method::Aop => {
            let budget = match (kv.get::<usize>("L")?, kv.get::<f64>("level")?) {
                (Some(l), _) => l,
                (None, Some(s)) if (0.0..=1.0).contains(&s) => impulse_count(s, f.len()),
                (None, Some(s)) => return Err(Error::InvalidArgument(format!("level {s} outside [0, 1]"))),
                (None, None) => return Err(Error::InvalidArgument("aop needs --L or --level".into())),
            };
            let (_, mask0) = detector.detect(&f)?;
            let res = solve_aop(&f, &blind_config(SolverConfig::constraint(lambda1, budget))?, &mask0)?;
            (res.image.clone(), Some(res.mask.clone()), Some(res))
        }
        Method::Penalty => {
            let lambda2: f64 = kv
                .get("lambda2")?
                .ok_or_else(|| Error::InvalidArgument("penalty needs --lambda2".into()))?;
            let (_, mask0) = detector.detect(&f)?;
            let res = solve_penalty(&f, &blind_config(SolverConfig::penalty(lambda1, lambda2))?, &mask0)?;
            (res.image.clone(), Some(res.mask.clone()), Some(res))
        }
    };

    write_pgm(&image, &args.out, args.format.into())?;
    if let Some(path) = &args.mask_out {
        let mask = mask.ok_or_else(|| Error::InvalidArgument(format!("method {method} produces no mask")))?;
        write_mask_pgm(&mask, path)?;
    }
    if let Some(path) = &args.trace {
        let res = result.ok_or_else(|| Error::InvalidArgument(format!("method {method} has no iteration trace")))?;
        write_trace(path, &res, args.timing)?;
    }
    Ok(())
}

fn evaluate(
    reference: &Path,
    test: &Path,
    masks: Option<(&Path, &Path)>,
    quantize: bool,
) -> Result<String, Error> {
    let r: Image64 = read_pgm(reference)?;
    let t: Image64 = read_pgm(test)?;
    let t = if quantize { t.quantized() } else { t };
    let value = psnr(&t, &r)?;
    let mut header = String::from("psnr");
    let mut line = format!("{value:.4}");
    if let Some((est, truth)) = masks {
        let stats = detection_stats(&read_mask_pgm(est)?, &read_mask_pgm(truth)?)?;
        header.push_str(",recall,precision,misses,false_hits");
        line.push_str(&format!(
            ",{:.6},{:.6},{},{}",
            stats.recall, stats.precision, stats.misses, stats.false_hits
        ));
    }
    Ok(format!("{header}\n{line}\n"))
}

fn experiment(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_kv(&KeyValueConfig::load(config)?)?;
    let output = run_experiment(&cfg)?;
    write_outputs(&output, out)?;
    Ok(())
}

fn simulate(value: f64, sigma: f64, level: f64, trials: u64, bins: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let hist = simulate_mixed_nll(value, sigma, level, trials, bins, seed, DynamicRange::default())?;
    let nll = hist.nll();
    let mut text = String::from("bin,center,count,nll\n");
    for (b, (&count, nll)) in hist.counts.iter().zip(&nll).enumerate() {
        let nll = nll.map_or_else(String::new, |v| format!("{v:.6}"));
        text.push_str(&format!("{b},{:.6},{count},{nll}\n", hist.center(b)));
    }
    let mut file = File::create(out).map_err(|e| io_err(out, e))?;
    file.write_all(text.as_bytes()).map_err(|e| io_err(out, e))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Corrupt {
            input,
            out,
            mask_out,
            sigma,
            impulse,
            level,
            seed,
            clip,
            format,
        } => {
            let spec = NoiseSpec {
                sigma,
                impulse: impulse.into(),
                level,
                seed,
                clip,
            };
            corrupt(&input, &out, mask_out.as_deref(), spec, format)
        }
        Command::Denoise(args) => denoise(&args),
        Command::Evaluate {
            reference,
            test,
            mask_est,
            mask_true,
            quantize,
        } => {
            let masks = mask_est.as_deref().zip(mask_true.as_deref());
            let text = evaluate(&reference, &test, masks, quantize)?;
            print!("{text}");
            Ok(())
        }
        Command::Experiment { config, out } => experiment(&config, &out),
        Command::SimulateNll {
            value,
            sigma,
            level,
            trials,
            bins,
            seed,
            out,
        } => simulate(value, sigma, level, trials, bins, seed, &out),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        3
    } else if e.is_numerical() {
        4
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
