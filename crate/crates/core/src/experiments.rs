//! Seeded benchmark harnesses producing versioned CSV tables.
//!
//! Trials run in parallel but every trial derives its own seed from
//! `(seed, sigma index, trial)` and results are aggregated in a fixed order,
//! so output bytes do not depend on the thread count.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demod::{demodulate_with, CarrierSpec};
use crate::error::Result;
use crate::multiscale::{Analyzer, Backend, PerScaleFeatures, QualityKind, quality, select};
use crate::register::{assess, register, RegisterParams, Truth};
use crate::spectral::RealImage;
use crate::steerable::FrameSpec;
use crate::synthlab::{
    correlation_of, deformed_fringe_pair, mix_seed, parabolic_chirp, plane_wave, pm_signal,
    sinusoidal_message, ssim, FringeParams, GroundTruth,
};
use crate::util::{interior_mask, wrap_to_period};

/// Version tag written as the first CSV line.
pub const CSV_SCHEMA: &str = "smvphase-bench/1";

/// One aggregated table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sigma: f64,
    pub variant: String,
    pub quality: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

/// `# schema` line, header, then rows in generation order.
pub fn to_csv(bench: &str, rows: &[BenchRow]) -> String {
    let mut out = format!("# {CSV_SCHEMA} {bench}\nsigma,variant,quality,metric,mean,std,trials\n");
    for r in rows {
        out.push_str(&format!(
            "{:.4},{},{},{},{:.9},{:.9},{}\n",
            r.sigma, r.variant, r.quality, r.metric, r.mean, r.std, r.trials
        ));
    }
    out
}

/// Mean and sample standard deviation in input order.
fn aggregate(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Samples this close below `2 pi` wrap to zero.
pub const CUT_SNAP: f64 = 1e-9;

fn wrap_snapped(p: f64) -> f64 {
    let w = wrap_to_period(p, 2.0 * PI);
    if w > 2.0 * PI - CUT_SNAP {
        0.0
    } else {
        w
    }
}

/// SSIM between an estimated phase (re-signed along `reference`) and the
/// true phase, both wrapped to `[0, 2 pi)` and cropped by `margin`.
/// Lattice-aligned waves put samples exactly on the cut, where rounding
/// alone would otherwise decide between 0 and 2 pi.
pub fn phase_ssim(
    phase: &RealImage,
    direction: &RealImage,
    reference: &RealImage,
    truth: &RealImage,
    margin: usize,
) -> Result<f64> {
    let aligned = crate::multiscale::align_phase(phase, direction, reference)?;
    let est = aligned.map(wrap_snapped).crop(margin);
    ssim(&est, &truth.map(wrap_snapped).crop(margin))
}

fn score_qualities(
    stack: &[PerScaleFeatures],
    spec: &FrameSpec,
    truth: &GroundTruth,
    kinds: &[QualityKind],
) -> Result<Vec<f64>> {
    let margin = spec.interior_margin();
    kinds
        .iter()
        .map(|&k| {
            let q = quality(stack, k, spec)?;
            let sel = select(stack, &q)?;
            phase_ssim(&sel.phase, &sel.direction, &truth.orientation, &truth.phase, margin)
        })
        .collect()
}

/// Plane-wave sweep: SSIM of the multiscale phase against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveConfig {
    pub n: usize,
    pub omega: f64,
    pub theta: f64,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub frame: FrameSpec,
    pub backend: Backend,
    pub qualities: Vec<QualityKind>,
    /// Round the wave vector to integer cycles per image so the wave is periodic.
    pub lattice: bool,
}

impl PlaneWaveConfig {
    /// Frequency and angle actually synthesized.
    pub fn effective_wave(&self) -> (f64, f64) {
        if !self.lattice {
            return (self.omega, self.theta);
        }
        let kx = (self.omega * self.theta.cos()).round();
        let ky = (self.omega * self.theta.sin()).round();
        (kx.hypot(ky), ky.atan2(kx))
    }
}

/// `0, 0.25, ..., 1.5`.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=6).map(|i| 0.25 * i as f64).collect()
}

impl PlaneWaveConfig {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            omega: 16.0,
            theta: PI / 4.0,
            sigmas: default_sigma_grid(),
            trials: 10,
            seed: 1,
            frame: FrameSpec::for_side(n)?,
            backend: Backend::Smv,
            qualities: QualityKind::ALL.to_vec(),
            lattice: true,
        })
    }
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Ms => "ms",
        Backend::Smv => "smv",
    }
}

/// Streams for seed derivation, one per benchmark.
const STREAM_PLANE: u64 = 1;
const STREAM_CHIRP: u64 = 2;
const STREAM_DEMOD: u64 = 3;
const STREAM_REGISTER: u64 = 4;

fn trial_grid(sigmas: &[f64], trials: usize) -> Vec<(usize, usize)> {
    (0..sigmas.len())
        .flat_map(|s| (0..trials).map(move |t| (s, t)))
        .collect()
}

fn trial_seed(seed: u64, stream: u64, sigma_idx: usize, trial: usize) -> u64 {
    mix_seed(mix_seed(seed, stream, sigma_idx as u64), stream, trial as u64)
}

pub fn bench_planewave(cfg: &PlaneWaveConfig) -> Result<Vec<BenchRow>> {
    let analyzer = Analyzer::new(&cfg.frame, cfg.backend)?;
    let grid = trial_grid(&cfg.sigmas, cfg.trials);
    let (omega, theta) = cfg.effective_wave();
    let scores: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&(si, t)| {
            let seed = trial_seed(cfg.seed, STREAM_PLANE, si, t);
            let g = plane_wave(cfg.n, omega, theta, cfg.sigmas[si], seed)?;
            let stack = analyzer.per_scale(&g.image)?;
            score_qualities(&stack, &cfg.frame, &g, &cfg.qualities)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        for (qi, &k) in cfg.qualities.iter().enumerate() {
            let vals: Vec<f64> = (0..cfg.trials).map(|t| scores[si * cfg.trials + t][qi]).collect();
            let (mean, std) = aggregate(&vals);
            rows.push(BenchRow {
                sigma,
                variant: backend_name(cfg.backend).into(),
                quality: k.name().into(),
                metric: "ssim".into(),
                mean,
                std,
                trials: cfg.trials,
            });
        }
    }
    Ok(rows)
}

/// Parabolic-chirp sweep over the standard and overcomplete feature sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub n: usize,
    pub rate: f64,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub frame: FrameSpec,
    pub qualities: Vec<QualityKind>,
}

impl ChirpConfig {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            rate: 8.0 / PI,
            sigmas: default_sigma_grid(),
            trials: 10,
            seed: 1,
            frame: FrameSpec::for_side(n)?,
            qualities: QualityKind::ALL.to_vec(),
        })
    }
}

pub fn bench_chirp(cfg: &ChirpConfig) -> Result<Vec<BenchRow>> {
    let standard = cfg.frame.with_overcomplete(false);
    let over = cfg.frame.with_overcomplete(true);
    let a_std = Analyzer::new(&standard, Backend::Smv)?;
    let a_over = Analyzer::new(&over, Backend::Smv)?;
    let grid = trial_grid(&cfg.sigmas, cfg.trials);
    let scores: Vec<(Vec<f64>, Vec<f64>)> = grid
        .par_iter()
        .map(|&(si, t)| {
            let seed = trial_seed(cfg.seed, STREAM_CHIRP, si, t);
            let g = parabolic_chirp(cfg.n, cfg.rate, cfg.sigmas[si], seed)?;
            // The overcomplete stack extends the standard one, so compute once.
            let full = a_over.per_scale(&g.image)?;
            let std_stack = &full[..standard.band_count()];
            debug_assert_eq!(a_std.scale_ids().len(), std_stack.len());
            Ok((
                score_qualities(std_stack, &standard, &g, &cfg.qualities)?,
                score_qualities(&full, &over, &g, &cfg.qualities)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        for (variant, pick) in [("standard", 0usize), ("overcomplete", 1)] {
            for (qi, &k) in cfg.qualities.iter().enumerate() {
                let vals: Vec<f64> = (0..cfg.trials)
                    .map(|t| {
                        let s = &scores[si * cfg.trials + t];
                        if pick == 0 { s.0[qi] } else { s.1[qi] }
                    })
                    .collect();
                let (mean, std) = aggregate(&vals);
                rows.push(BenchRow {
                    sigma,
                    variant: variant.into(),
                    quality: k.name().into(),
                    metric: "ssim".into(),
                    mean,
                    std,
                    trials: cfg.trials,
                });
            }
        }
    }
    Ok(rows)
}

/// Demodulation sweep: correlation of the recovered and true messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    pub n: usize,
    pub carrier: CarrierSpec,
    pub message_amplitude: f64,
    pub message_frequency: f64,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub frame: FrameSpec,
    pub qualities: Vec<QualityKind>,
}

impl DemodConfig {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            carrier: CarrierSpec::new(32.0, 0.0, 0.0)?,
            message_amplitude: 0.5,
            message_frequency: 4.0,
            sigmas: default_sigma_grid(),
            trials: 10,
            seed: 1,
            frame: FrameSpec::for_side(n)?.with_overcomplete(true),
            qualities: vec![QualityKind::Amplitude, QualityKind::Product],
        })
    }
}

/// Interior correlation of a recovered message with the truth.
pub fn message_correlation(est: &RealImage, truth: &RealImage, margin: usize) -> Result<f64> {
    let mask = interior_mask(est.side(), margin);
    let a = crate::util::masked_values(est, &mask);
    let b = crate::util::masked_values(truth, &mask);
    correlation_of(&a, &b)
}

pub fn bench_demod(cfg: &DemodConfig) -> Result<Vec<BenchRow>> {
    let analyzer = Analyzer::new(&cfg.frame, Backend::Smv)?;
    let message = sinusoidal_message(cfg.n, cfg.message_amplitude, cfg.message_frequency);
    let margin = cfg.frame.interior_margin();
    let grid = trial_grid(&cfg.sigmas, cfg.trials);
    let c = cfg.carrier;
    let scores: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&(si, t)| {
            let seed = trial_seed(cfg.seed, STREAM_DEMOD, si, t);
            let g = pm_signal(cfg.n, c.omega_c, c.theta_c, c.phi_c, &message, cfg.sigmas[si], seed)?;
            cfg.qualities
                .iter()
                .map(|&k| {
                    let d = demodulate_with(&analyzer, &g.image, &c, k)?;
                    message_correlation(&d.message_est, &message, margin)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let variant = if cfg.frame.overcomplete { "overcomplete" } else { "standard" };
    let mut rows = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        for (qi, &k) in cfg.qualities.iter().enumerate() {
            let vals: Vec<f64> = (0..cfg.trials).map(|t| scores[si * cfg.trials + t][qi]).collect();
            let (mean, std) = aggregate(&vals);
            rows.push(BenchRow {
                sigma,
                variant: variant.into(),
                quality: k.name().into(),
                metric: "correlation".into(),
                mean,
                std,
                trials: cfg.trials,
            });
        }
    }
    Ok(rows)
}

/// Synthetic deformed-fringe registration sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterBenchConfig {
    pub n: usize,
    pub fringe: FringeParams,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub frame: FrameSpec,
    pub params: RegisterParams,
}

impl RegisterBenchConfig {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            fringe: FringeParams::default(),
            sigmas: vec![0.0, 0.1, 0.2, 0.3],
            trials: 10,
            seed: 1,
            frame: FrameSpec::for_side(n)?,
            params: RegisterParams::default(),
        })
    }
}

/// Metrics reported per registration trial.
pub const REGISTER_METRICS: [&str; 5] = ["corr_before", "corr_after", "improvement", "rms_px", "coverage"];

pub fn register_trial(cfg: &RegisterBenchConfig, analyzer: &Analyzer, sigma: f64, seed: u64) -> Result<[f64; 5]> {
    let (fixed, moving) = deformed_fringe_pair(cfg.n, cfg.fringe, sigma, seed)?;
    let reg = register(&fixed.image, &moving.image, analyzer, &cfg.params)?;
    let truth = fixed.displacement.as_ref().expect("pair carries its displacement");
    let report = assess(
        &fixed.image,
        &moving.image,
        &reg.registered,
        &reg.mask,
        &reg.field,
        Some(Truth {
            field: truth,
            normal: &fixed.orientation,
        }),
    )?;
    Ok([
        report.corr_before,
        report.corr_after,
        report.corr_after - report.corr_before,
        report.displacement_rms.unwrap_or(f64::NAN),
        report.mask_coverage,
    ])
}

pub fn bench_register(cfg: &RegisterBenchConfig) -> Result<Vec<BenchRow>> {
    let analyzer = Analyzer::new(&cfg.frame, Backend::Smv)?;
    let grid = trial_grid(&cfg.sigmas, cfg.trials);
    let scores: Vec<[f64; 5]> = grid
        .par_iter()
        .map(|&(si, t)| {
            let seed = trial_seed(cfg.seed, STREAM_REGISTER, si, t);
            register_trial(cfg, &analyzer, cfg.sigmas[si], seed)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        for (mi, metric) in REGISTER_METRICS.iter().enumerate() {
            let vals: Vec<f64> = (0..cfg.trials).map(|t| scores[si * cfg.trials + t][mi]).collect();
            let (mean, std) = aggregate(&vals);
            rows.push(BenchRow {
                sigma,
                variant: "fringe".into(),
                quality: cfg.params.quality.name().into(),
                metric: (*metric).into(),
                mean,
                std,
                trials: cfg.trials,
            });
        }
    }
    Ok(rows)
}

/// Looks up the mean of one row.
pub fn row_mean(rows: &[BenchRow], sigma: f64, variant: &str, quality: &str, metric: &str) -> Option<f64> {
    rows.iter()
        .find(|r| (r.sigma - sigma).abs() < 1e-9 && r.variant == variant && r.quality == quality && r.metric == metric)
        .map(|r| r.mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let rows = vec![BenchRow {
            sigma: 0.25,
            variant: "smv".into(),
            quality: "product".into(),
            metric: "ssim".into(),
            mean: 0.5,
            std: 0.125,
            trials: 3,
        }];
        let csv = to_csv("planewave", &rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# smvphase-bench/1 planewave");
        assert_eq!(lines[1], "sigma,variant,quality,metric,mean,std,trials");
        assert_eq!(lines[2], "0.2500,smv,product,ssim,0.500000000,0.125000000,3");
    }

    #[test]
    fn aggregate_is_sample_std() {
        let (m, s) = aggregate(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(aggregate(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn small_planewave_bench_is_deterministic() {
        let mut cfg = PlaneWaveConfig::new(64).unwrap();
        cfg.sigmas = vec![0.0, 1.0];
        cfg.trials = 2;
        let a = to_csv("planewave", &bench_planewave(&cfg).unwrap());
        let b = to_csv("planewave", &bench_planewave(&cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 2 + 2 * 3);
    }
}
