//! `smvphase` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use smvphase::demod::{demodulate_with, estimate_carrier, CarrierSpec};
use smvphase::experiments::{
    bench_chirp, bench_demod, bench_planewave, bench_register, to_csv, ChirpConfig, DemodConfig,
    PlaneWaveConfig, RegisterBenchConfig,
};
use smvphase::io::{read_pgm, read_plane, write_atomic, write_plane, write_visualization};
use smvphase::multiscale::{Analyzer, Backend, QualityKind};
use smvphase::register::{assess, register, FreqSource, RegisterParams};
use smvphase::steerable::{decompose, reconstruct, FrameSpec};
use smvphase::{Error, RealImage};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "smvphase", version, about = "Multiscale spatial phase estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frame decomposition into band planes, with the round-trip residual.
    Decompose(ImageArgs),
    /// Multiscale amplitude, phase, orientation, scale index and quality.
    Phase(PhaseArgs),
    /// Recover the message of a phase-modulated image.
    Demod(DemodArgs),
    /// Register a moving image onto a fixed one.
    Register(RegisterArgs),
    /// Plane-wave sweep (SSIM of the phase against the truth).
    BenchPlanewave(PlaneBenchArgs),
    /// Parabolic-chirp sweep, standard vs overcomplete features.
    BenchChirp(ChirpBenchArgs),
    /// Phase-modulation sweep (message correlation).
    BenchDemod(SweepArgs),
    /// Synthetic deformed-fringe registration sweep.
    BenchRegister(RegisterBenchArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct FrameArgs {
    /// Finest dyadic scale M (defaults to log2 of the image side).
    #[arg(long)]
    scales: Option<u32>,
    /// Coarsest dyadic scale M'.
    #[arg(long, default_value_t = 3)]
    min_scale: u32,
    /// Subscales per octave K.
    #[arg(long, default_value_t = 2)]
    subscales: u32,
    /// Add per-scale low-pass feature bands.
    #[arg(long)]
    overcomplete: bool,
}

impl FrameArgs {
    fn spec(&self, n: usize) -> Result<FrameSpec, Error> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let m_max = n.trailing_zeros();
        if let Some(s) = self.scales {
            if s != m_max {
                return Err(Error::InvalidFrame(format!(
                    "--scales {s} does not match the {n} px image (M = {m_max})"
                )));
            }
        }
        let spec = FrameSpec {
            m_min: self.min_scale,
            m_max,
            k_sub: self.subscales,
            overcomplete: self.overcomplete,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum QualityArg {
    Amplitude,
    Ovar,
    Product,
}

impl From<QualityArg> for QualityKind {
    fn from(q: QualityArg) -> Self {
        match q {
            QualityArg::Amplitude => QualityKind::Amplitude,
            QualityArg::Ovar => QualityKind::Ovar,
            QualityArg::Product => QualityKind::Product,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum BackendArg {
    Ms,
    Smv,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Ms => Backend::Ms,
            BackendArg::Smv => Backend::Smv,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum FreqArg {
    Fixed,
    Delta,
}

impl From<FreqArg> for FreqSource {
    fn from(f: FreqArg) -> Self {
        match f {
            FreqArg::Fixed => FreqSource::Fixed,
            FreqArg::Delta => FreqSource::Delta,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct ImageArgs {
    /// Input image: binary PGM, or a `.f32` plane with its `.txt` sidecar.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PhaseArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[arg(long, value_enum, default_value = "product")]
    quality: QualityArg,
    #[arg(long, value_enum, default_value = "smv")]
    backend: BackendArg,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DemodArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[arg(long, value_enum, default_value = "product")]
    quality: QualityArg,
    /// Carrier frequency in cycles per image; estimated from the spectrum if omitted.
    #[arg(long)]
    carrier_omega: Option<f64>,
    /// Carrier direction, degrees.
    #[arg(long, default_value_t = 0.0)]
    carrier_theta: f64,
    /// Carrier phase offset, radians.
    #[arg(long, default_value_t = 0.0)]
    carrier_phi: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RegisterArgs {
    #[arg(long)]
    fixed: PathBuf,
    #[arg(long)]
    moving: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    #[command(flatten)]
    reg: RegOptions,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RegOptions {
    #[arg(long, value_enum, default_value = "product")]
    quality: QualityArg,
    /// Quality percentile below which displacement is zeroed.
    #[arg(long, default_value_t = 60.0)]
    mask_percentile: f64,
    #[arg(long, value_enum, default_value = "fixed")]
    freq_source: FreqArg,
    /// Window for local unwrapping and frequency estimation.
    #[arg(long, default_value_t = 7)]
    window: usize,
    /// Warp-and-re-estimate passes.
    #[arg(long, default_value_t = 1)]
    iterations: usize,
}

impl RegOptions {
    fn params(&self) -> Result<RegisterParams, Error> {
        if !(0.0..=100.0).contains(&self.mask_percentile) {
            return Err(Error::InvalidParameter(format!(
                "--mask-percentile {} outside [0, 100]",
                self.mask_percentile
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("--iterations must be at least 1".into()));
        }
        Ok(RegisterParams {
            quality: self.quality.into(),
            window: self.window,
            mask_percentile: self.mask_percentile,
            freq_source: self.freq_source.into(),
            iterations: self.iterations,
        })
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct SweepArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Image side (power of two).
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Comma-separated noise levels, or `start:step:stop`.
    #[arg(long, default_value = "0:0.25:1.5")]
    sigma_grid: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    frame: FrameArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PlaneBenchArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Wave frequency in cycles per image.
    #[arg(long, default_value_t = 16.0)]
    omega: f64,
    /// Wave direction, degrees.
    #[arg(long, default_value_t = 45.0)]
    theta: f64,
    #[arg(long, value_enum, default_value = "smv")]
    backend: BackendArg,
    /// Use the exact (possibly non-periodic) wave vector instead of the nearest lattice one.
    #[arg(long)]
    no_lattice: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ChirpBenchArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Chirp rate `a` in `cos(a (x^2 + y^2))`; defaults to 8 / pi.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RegisterBenchArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[command(flatten)]
    reg: RegOptions,
}

/// Everything needed to reproduce an output directory.
#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    args: &'a T,
    resolved: serde_json::Value,
}

fn write_config<T: Serialize>(dir: &Path, subcommand: &'static str, args: &T, resolved: serde_json::Value) -> Result<(), Error> {
    let cfg = RunConfig {
        tool: "smvphase",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        args,
        resolved,
    };
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&dir.join("config.json"), format!("{text}\n").as_bytes())
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn parse_sigma_grid(s: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidParameter(format!("bad --sigma-grid {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !step.is_finite() || step <= 0.0 || b < a {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            (0..=count).map(|i| a + step * i as f64).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(bad());
    }
    Ok(grid)
}

fn read_image(path: &Path) -> Result<RealImage, Error> {
    if path.extension().is_some_and(|e| e == "f32") {
        read_plane(path)
    } else {
        read_pgm(path)
    }
}

fn read_square(path: &Path) -> Result<(RealImage, usize), Error> {
    let img = read_image(path)?;
    let n = img.require_square()?;
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok((img, n))
}

fn out_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn emit(dir: &Path, name: &str, img: &RealImage) -> Result<(), Error> {
    write_plane(&dir.join(format!("{name}.f32")), name, img, &[])?;
    write_visualization(&dir.join(format!("{name}.pgm")), name, img)
}

fn k_image(k_map: &[usize], n: usize) -> RealImage {
    RealImage::new(n, n, k_map.iter().map(|&k| k as f64).collect()).expect("finite indices")
}

fn cmd_decompose(a: &ImageArgs) -> Result<(), Error> {
    let (img, n) = read_square(&a.input)?;
    let spec = a.frame.spec(n)?;
    out_dir(&a.out_dir)?;
    let stack = decompose(&img, &spec)?;
    let mut files = Vec::new();
    for (i, (id, band)) in stack.bands.iter().enumerate() {
        let name = format!("band{i:02}_j{}_s{}", id.j, id.s);
        write_plane(&a.out_dir.join(format!("{name}.f32")), &name, band, &[("j", id.j.to_string()), ("s", id.s.to_string())])?;
        files.push(name);
    }
    write_plane(&a.out_dir.join("approx.f32"), "approx", &stack.approx, &[])?;
    files.push("approx".into());
    for (s, low) in &stack.extras {
        let name = format!("lowpass_s{s}");
        write_plane(&a.out_dir.join(format!("{name}.f32")), &name, low, &[("s", s.to_string())])?;
        files.push(name);
    }
    let residual = reconstruct(&stack)?.relative_l2(&img);
    let manifest = serde_json::json!({ "planes": files, "reconstruction_residual": residual });
    write_atomic(
        &a.out_dir.join("manifest.json"),
        format!("{}\n", serde_json::to_string_pretty(&manifest).expect("json")).as_bytes(),
    )?;
    write_config(&a.out_dir, "decompose", a, to_json(&spec)?)?;
    println!("bands: {}", stack.bands.len());
    println!("reconstruction residual: {residual:e}");
    Ok(())
}

fn cmd_phase(a: &PhaseArgs) -> Result<(), Error> {
    let (img, n) = read_square(&a.image.input)?;
    let spec = a.image.frame.spec(n)?;
    out_dir(&a.image.out_dir)?;
    let analyzer = Analyzer::new(&spec, a.backend.into())?;
    let (f, _) = analyzer.analyze(&img, a.quality.into())?;
    let dir = &a.image.out_dir;
    emit(dir, "amplitude", &f.amplitude)?;
    emit(dir, "phase", &f.phase)?;
    emit(dir, "orientation", &f.direction)?;
    emit(dir, "k_map", &k_image(&f.k_map, n))?;
    emit(dir, "quality", &f.quality)?;
    write_config(dir, "phase", a, to_json(&spec)?)?;
    Ok(())
}

fn cmd_demod(a: &DemodArgs) -> Result<(), Error> {
    let (img, n) = read_square(&a.image.input)?;
    let spec = a.image.frame.spec(n)?;
    let carrier = match a.carrier_omega {
        Some(w) => CarrierSpec::new(w, a.carrier_theta.to_radians(), a.carrier_phi)?,
        None => {
            let c = estimate_carrier(&img)?;
            eprintln!(
                "estimated carrier: omega {:.3} theta {:.2} deg phi {:.4} (advisory)",
                c.omega_c,
                c.theta_c.to_degrees(),
                c.phi_c
            );
            c
        }
    };
    out_dir(&a.image.out_dir)?;
    let analyzer = Analyzer::new(&spec, Backend::Smv)?;
    let d = demodulate_with(&analyzer, &img, &carrier, a.quality.into())?;
    emit(&a.image.out_dir, "message", &d.message_est)?;
    emit(&a.image.out_dir, "k_map", &k_image(&d.k_map, n))?;
    write_config(
        &a.image.out_dir,
        "demod",
        a,
        serde_json::json!({ "frame": to_json(&spec)?, "carrier": to_json(&carrier)? }),
    )?;
    Ok(())
}

fn cmd_register(a: &RegisterArgs) -> Result<(), Error> {
    let (fixed, n) = read_square(&a.fixed)?;
    let (moving, _) = read_square(&a.moving)?;
    fixed.check_same_shape(&moving)?;
    let spec = a.frame.spec(n)?;
    let params = a.reg.params()?;
    out_dir(&a.out_dir)?;
    let analyzer = Analyzer::new(&spec, Backend::Smv)?;
    let reg = register(&fixed, &moving, &analyzer, &params)?;
    let report = assess(&fixed, &moving, &reg.registered, &reg.mask, &reg.field, None)?;
    write_plane(&a.out_dir.join("dx.f32"), "dx", &reg.field.dx, &[("unit", "px".into())])?;
    write_plane(&a.out_dir.join("dy.f32"), "dy", &reg.field.dy, &[("unit", "px".into())])?;
    emit(&a.out_dir, "registered", &reg.registered)?;
    let line = serde_json::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&a.out_dir.join("report.jsonl"), format!("{line}\n").as_bytes())?;
    println!("{line}");
    write_config(
        &a.out_dir,
        "register",
        a,
        serde_json::json!({ "frame": to_json(&spec)?, "params": to_json(&params)? }),
    )?;
    Ok(())
}

fn sweep_frame(s: &SweepArgs) -> Result<FrameSpec, Error> {
    s.frame.spec(s.n)
}

fn check_trials(s: &SweepArgs) -> Result<(), Error> {
    if s.trials == 0 {
        return Err(Error::InvalidParameter("--trials must be at least 1".into()));
    }
    Ok(())
}

fn write_csv(s: &SweepArgs, name: &str, csv: &str) -> Result<(), Error> {
    write_atomic(&s.out_dir.join(format!("{name}.csv")), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn cmd_bench_planewave(a: &PlaneBenchArgs) -> Result<(), Error> {
    check_trials(&a.sweep)?;
    let mut cfg = PlaneWaveConfig::new(a.sweep.n)?;
    cfg.frame = sweep_frame(&a.sweep)?;
    cfg.omega = a.omega;
    cfg.theta = a.theta.to_radians();
    cfg.sigmas = parse_sigma_grid(&a.sweep.sigma_grid)?;
    cfg.trials = a.sweep.trials;
    cfg.seed = a.sweep.seed;
    cfg.backend = a.backend.into();
    cfg.lattice = !a.no_lattice;
    out_dir(&a.sweep.out_dir)?;
    let csv = to_csv("planewave", &bench_planewave(&cfg)?);
    write_config(&a.sweep.out_dir, "bench-planewave", a, to_json(&cfg)?)?;
    write_csv(&a.sweep, "planewave", &csv)
}

fn cmd_bench_chirp(a: &ChirpBenchArgs) -> Result<(), Error> {
    check_trials(&a.sweep)?;
    let mut cfg = ChirpConfig::new(a.sweep.n)?;
    cfg.frame = sweep_frame(&a.sweep)?;
    if let Some(r) = a.rate {
        cfg.rate = r;
    }
    cfg.sigmas = parse_sigma_grid(&a.sweep.sigma_grid)?;
    cfg.trials = a.sweep.trials;
    cfg.seed = a.sweep.seed;
    out_dir(&a.sweep.out_dir)?;
    let csv = to_csv("chirp", &bench_chirp(&cfg)?);
    write_config(&a.sweep.out_dir, "bench-chirp", a, to_json(&cfg)?)?;
    write_csv(&a.sweep, "chirp", &csv)
}

fn cmd_bench_demod(a: &SweepArgs) -> Result<(), Error> {
    check_trials(a)?;
    let mut cfg = DemodConfig::new(a.n)?;
    // The demodulation protocol always uses the overcomplete feature set.
    cfg.frame = sweep_frame(a)?.with_overcomplete(true);
    cfg.sigmas = parse_sigma_grid(&a.sigma_grid)?;
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    out_dir(&a.out_dir)?;
    let csv = to_csv("demod", &bench_demod(&cfg)?);
    write_config(&a.out_dir, "bench-demod", a, to_json(&cfg)?)?;
    write_csv(a, "demod", &csv)
}

fn cmd_bench_register(a: &RegisterBenchArgs) -> Result<(), Error> {
    check_trials(&a.sweep)?;
    let mut cfg = RegisterBenchConfig::new(a.sweep.n)?;
    cfg.frame = sweep_frame(&a.sweep)?;
    cfg.params = a.reg.params()?;
    cfg.sigmas = parse_sigma_grid(&a.sweep.sigma_grid)?;
    cfg.trials = a.sweep.trials;
    cfg.seed = a.sweep.seed;
    out_dir(&a.sweep.out_dir)?;
    let csv = to_csv("register", &bench_register(&cfg)?);
    write_config(&a.sweep.out_dir, "bench-register", a, to_json(&cfg)?)?;
    write_csv(&a.sweep, "register", &csv)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::NonSquare { .. }
        | Error::NotPowerOfTwo(_)
        | Error::InvalidFrame(_)
        | Error::InvalidParameter(_)
        | Error::ShapeMismatch { .. } => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("SMVPHASE_THREADS") {
        let threads: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("SMVPHASE_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    configure_threads()?;
    match &cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Phase(a) => cmd_phase(a),
        Command::Demod(a) => cmd_demod(a),
        Command::Register(a) => cmd_register(a),
        Command::BenchPlanewave(a) => cmd_bench_planewave(a),
        Command::BenchChirp(a) => cmd_bench_chirp(a),
        Command::BenchDemod(a) => cmd_bench_demod(a),
        Command::BenchRegister(a) => cmd_bench_register(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
