//! Synthetic signals with ground truth, similarity scores and the analytic
//! orientation-bias model for two non-orthogonal waves.
//!
//! Generators sample the physical grid `x[i] = -pi + 2 pi i / n` (columns are
//! `x`, rows are `y`) and add seeded i.i.d. Gaussian noise.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::register::DisplacementField;
use crate::spectral::{forward_fft, RealImage};
use crate::util::{grid_coord, wrap_to_period};

/// Synthetic image plus the quantities used to score estimates of it.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Noisy observation.
    pub image: RealImage,
    /// Noise-free signal.
    pub clean: RealImage,
    /// True phase wrapped to `[0, 2 pi)`.
    pub phase: RealImage,
    /// Direction (radians) along which `phase` increases.
    pub orientation: RealImage,
    pub message: Option<RealImage>,
    pub displacement: Option<DisplacementField>,
}

/// SplitMix64 finalizer used to derive independent per-trial seeds.
pub fn mix_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded `N(0, sigma^2)` field.
pub fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RealImage::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    })
}

fn add_noise(clean: &RealImage, sigma: f64, seed: u64) -> RealImage {
    if sigma == 0.0 {
        return clean.clone();
    }
    let noise = gaussian_noise(clean.side(), sigma, seed);
    clean.zip_map(&noise, |a, b| a + b).expect("same shape")
}

fn require_pow2(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// `cos(omega (x cos theta + y sin theta)) + noise`.
pub fn plane_wave(n: usize, omega: f64, theta: f64, sigma: f64, seed: u64) -> Result<GroundTruth> {
    require_pow2(n)?;
    let (s, c) = theta.sin_cos();
    let psi = |r: usize, col: usize| omega * (grid_coord(col, n) * c + grid_coord(r, n) * s);
    let clean = RealImage::from_fn(n, |r, col| psi(r, col).cos());
    let phase = RealImage::from_fn(n, |r, col| wrap_to_period(psi(r, col), 2.0 * PI));
    Ok(GroundTruth {
        image: add_noise(&clean, sigma, seed),
        clean,
        phase,
        orientation: RealImage::filled(n, theta),
        message: None,
        displacement: None,
    })
}

/// Largest local frequency (radians per sample) of `cos(a (x^2 + y^2))` on the grid.
pub fn chirp_max_frequency(n: usize, a: f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    let r = PI * 2f64.sqrt();
    2.0 * a.abs() * r * h
}

/// `cos(a (x^2 + y^2)) + noise`; rejects rates that alias at the grid corners.
pub fn parabolic_chirp(n: usize, a: f64, sigma: f64, seed: u64) -> Result<GroundTruth> {
    require_pow2(n)?;
    let fmax = chirp_max_frequency(n, a);
    if fmax >= PI {
        return Err(Error::InvalidParameter(format!(
            "chirp rate {a} reaches {fmax:.3} rad/sample at the grid corner"
        )));
    }
    let psi = |r: usize, c: usize| {
        let (x, y) = (grid_coord(c, n), grid_coord(r, n));
        a * (x * x + y * y)
    };
    let clean = RealImage::from_fn(n, |r, c| psi(r, c).cos());
    let phase = RealImage::from_fn(n, |r, c| wrap_to_period(psi(r, c), 2.0 * PI));
    let orientation = RealImage::from_fn(n, |r, c| {
        let (x, y) = (grid_coord(c, n), grid_coord(r, n));
        let d = if a >= 0.0 { y.atan2(x) } else { (-y).atan2(-x) };
        if x == 0.0 && y == 0.0 {
            0.0
        } else {
            d
        }
    });
    Ok(GroundTruth {
        image: add_noise(&clean, sigma, seed),
        clean,
        phase,
        orientation,
        message: None,
        displacement: None,
    })
}

/// Fraction of `message` energy at radial frequencies above `omega_c / 2`
/// (in cycles per image, matching the grid convention of the generators).
pub fn band_violation(message: &RealImage, omega_c: f64) -> Result<f64> {
    let n = message.require_square()?;
    let spec = forward_fft(message)?;
    let total = spec.energy();
    if total == 0.0 {
        return Ok(0.0);
    }
    let bin = |k: usize| if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    let mut above = 0.0;
    for r in 0..n {
        for c in 0..n {
            if bin(r).hypot(bin(c)) > omega_c / 2.0 {
                above += spec.get(r, c).norm_sqr();
            }
        }
    }
    Ok(above / total)
}

/// Largest tolerated [`band_violation`].
pub const BAND_TOLERANCE: f64 = 0.01;

/// Phase-modulated carrier `cos(omega_c n.x + phi_c + m(x)) + noise`.
pub fn pm_signal(
    n: usize,
    omega_c: f64,
    theta_c: f64,
    phi_c: f64,
    message: &RealImage,
    sigma: f64,
    seed: u64,
) -> Result<GroundTruth> {
    require_pow2(n)?;
    if message.shape() != (n, n) {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            actual: message.shape(),
        });
    }
    let fraction = band_violation(message, omega_c)?;
    if fraction >= BAND_TOLERANCE {
        return Err(Error::BandLimit { fraction });
    }
    let (s, c) = theta_c.sin_cos();
    let psi = |r: usize, col: usize| {
        omega_c * (grid_coord(col, n) * c + grid_coord(r, n) * s) + phi_c + message.get(r, col)
    };
    let clean = RealImage::from_fn(n, |r, col| psi(r, col).cos());
    let phase = RealImage::from_fn(n, |r, col| wrap_to_period(psi(r, col), 2.0 * PI));
    Ok(GroundTruth {
        image: add_noise(&clean, sigma, seed),
        clean,
        phase,
        orientation: RealImage::filled(n, theta_c),
        message: Some(message.clone()),
        displacement: None,
    })
}

/// `amp * cos(k x)` on the physical grid, the default demodulation message.
pub fn sinusoidal_message(n: usize, amp: f64, k: f64) -> RealImage {
    RealImage::from_fn(n, |_, c| amp * (k * grid_coord(c, n)).cos())
}

/// Parameters of the synthetic fingerprint-like registration benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeParams {
    /// Ridge period in pixels.
    pub period: f64,
    /// Largest displacement magnitude, pixels.
    pub max_displacement: f64,
}

impl Default for FringeParams {
    fn default() -> Self {
        Self {
            period: 12.0,
            max_displacement: 3.0,
        }
    }
}

/// Loop-like ridge phase in pixel coordinates (`x` = column, `y` = row).
fn fringe_phase(n: usize, period: f64, x: f64, y: f64) -> f64 {
    let nf = n as f64;
    let (cx, cy) = (0.45 * nf, 0.62 * nf);
    let (dx, dy) = (x - cx, y - cy);
    let swirl = 6.0 * (2.0 * PI * x / nf).sin() * (PI * y / nf).cos();
    2.0 * PI / period * (dx * dx + 1.6 * dy * dy).sqrt() + swirl
}

/// Smooth deformation with unit peak magnitude.
fn unit_deformation(n: usize, x: f64, y: f64) -> (f64, f64) {
    let nf = n as f64;
    let (u, v) = (2.0 * PI * x / nf, 2.0 * PI * y / nf);
    (
        (u + 0.4).sin() * (0.7 * v).cos() + 0.3 * (0.5 * v + 1.1).sin(),
        (0.8 * u).cos() * (v + 1.0).sin() - 0.25 * (u - 0.3).cos(),
    )
}

/// Fixed/moving pair of a fingerprint-like fringe under a known smooth
/// deformation `T`: `moving(x) = fixed(x + T(x))`.
///
/// The stored displacement is the field `d` with `moving(x + d(x)) = fixed(x)`.
/// Noise is added independently to both images.
pub fn deformed_fringe_pair(
    n: usize,
    params: FringeParams,
    sigma: f64,
    seed: u64,
) -> Result<(GroundTruth, GroundTruth)> {
    require_pow2(n)?;
    let mut peak = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let (a, b) = unit_deformation(n, c as f64, r as f64);
            peak = peak.max(a.hypot(b));
        }
    }
    let scale = params.max_displacement / peak;
    let deform = |x: f64, y: f64| {
        let (a, b) = unit_deformation(n, x, y);
        (a * scale, b * scale)
    };
    let phase_at = |x: f64, y: f64| fringe_phase(n, params.period, x, y);
    let gradient_dir = |x: f64, y: f64| {
        let h = 1e-3;
        let gx = phase_at(x + h, y) - phase_at(x - h, y);
        let gy = phase_at(x, y + h) - phase_at(x, y - h);
        gy.atan2(gx)
    };

    let fixed_clean = RealImage::from_fn(n, |r, c| phase_at(c as f64, r as f64).cos());
    let moving_clean = RealImage::from_fn(n, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let (tx, ty) = deform(x, y);
        phase_at(x + tx, y + ty).cos()
    });

    // Solve d = -T(x + d) by fixed-point iteration (T is a contraction here).
    let mut dx = vec![0.0; n * n];
    let mut dy = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (c as f64, r as f64);
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..50 {
                let (tx, ty) = deform(x + a, y + b);
                a = -tx;
                b = -ty;
            }
            dx[r * n + c] = a;
            dy[r * n + c] = b;
        }
    }
    let truth = DisplacementField {
        dx: RealImage::from_vec_unchecked(n, dx),
        dy: RealImage::from_vec_unchecked(n, dy),
    };

    let fixed_phase = RealImage::from_fn(n, |r, c| {
        wrap_to_period(phase_at(c as f64, r as f64), 2.0 * PI)
    });
    let fixed_dir = RealImage::from_fn(n, |r, c| gradient_dir(c as f64, r as f64));
    let moving_phase = RealImage::from_fn(n, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let (tx, ty) = deform(x, y);
        wrap_to_period(phase_at(x + tx, y + ty), 2.0 * PI)
    });
    let moving_dir = RealImage::from_fn(n, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let (tx, ty) = deform(x, y);
        gradient_dir(x + tx, y + ty)
    });

    let fixed = GroundTruth {
        image: add_noise(&fixed_clean, sigma, mix_seed(seed, 1, 0)),
        clean: fixed_clean,
        phase: fixed_phase,
        orientation: fixed_dir,
        message: None,
        displacement: Some(truth.clone()),
    };
    let moving = GroundTruth {
        image: add_noise(&moving_clean, sigma, mix_seed(seed, 2, 0)),
        clean: moving_clean,
        phase: moving_phase,
        orientation: moving_dir,
        message: None,
        displacement: Some(truth),
    };
    Ok((fixed, moving))
}

/// Constants of the structural similarity index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub window: usize,
    pub sigma: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    /// Standard constants with a `2 pi` range for wrapped phase maps.
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            window: 11,
            sigma: 1.5,
            dynamic_range: 2.0 * PI,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filtering over positions where the window fits.
fn filter_valid(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = kernel.len();
    let ow = w + 1 - k;
    let oh = h + 1 - k;
    let mut tmp = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                acc += kv * data[r * w + c + i];
            }
            tmp[r * ow + c] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(r + i) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    (out, ow, oh)
}

/// Mean SSIM with [`SsimParams::default`].
pub fn ssim(a: &RealImage, b: &RealImage) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Mean local SSIM over every position where the Gaussian window fits.
pub fn ssim_with(a: &RealImage, b: &RealImage, p: &SsimParams) -> Result<f64> {
    a.check_same_shape(b)?;
    let (w, h) = a.shape();
    if w < p.window || h < p.window {
        return Err(Error::InvalidParameter(format!(
            "image {w}x{h} smaller than the {} px SSIM window",
            p.window
        )));
    }
    let kernel = gaussian_kernel(p.window, p.sigma);
    let (x, y) = (a.as_slice(), b.as_slice());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
    let (mx, ow, oh) = filter_valid(x, w, h, &kernel);
    let (my, _, _) = filter_valid(y, w, h, &kernel);
    let (sxx, _, _) = filter_valid(&xx, w, h, &kernel);
    let (syy, _, _) = filter_valid(&yy, w, h, &kernel);
    let (sxy, _, _) = filter_valid(&xy, w, h, &kernel);
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cov + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / (ow * oh) as f64)
}

/// Pearson correlation of two equally shaped images.
pub fn correlation(a: &RealImage, b: &RealImage) -> Result<f64> {
    a.check_same_shape(b)?;
    correlation_of(a.as_slice(), b.as_slice())
}

pub fn correlation_of(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Numerator and denominator of the approximate bias model for two waves
/// `A cos(n.x) + B cos(n_perp_eps.x)`, with the cross terms collapsed into
/// `cos((n - n_perp_eps).x)`.
fn bias_terms(a: f64, b: f64, theta: f64, epsilon: f64, x: [f64; 2]) -> (f64, f64) {
    let n = [theta.cos(), theta.sin()];
    let np = [(theta + epsilon).sin(), -(theta + epsilon).cos()];
    let cross = ((n[0] - np[0]) * x[0] + (n[1] - np[1]) * x[1]).cos();
    let num = b * b * (4.0 * epsilon).sin() + 2.0 * a * b * (2.0 * epsilon).sin() * cross;
    let den = a * a + b * b * (4.0 * epsilon).cos() + 2.0 * a * b * (2.0 * epsilon).cos() * cross;
    (num, den)
}

/// Predicted orientation estimate `theta + arg(den + i num) / 4` of two
/// unit-frequency waves at angles `theta` and `theta + epsilon - pi/2`,
/// evaluated at position `x` (so the wave phases are `n.x`).
pub fn predicted_orientation_bias(a: f64, b: f64, theta: f64, epsilon: f64, x: [f64; 2]) -> Result<f64> {
    if epsilon.abs() >= FRAC_PI_4 {
        return Err(Error::InvalidParameter(format!(
            "|epsilon| = {} must stay below pi/4",
            epsilon.abs()
        )));
    }
    let (num, den) = bias_terms(a, b, theta, epsilon, x);
    if num == 0.0 {
        return Ok(theta);
    }
    Ok(theta + num.atan2(den) / 4.0)
}

/// Same model with the single-argument arctangent of `num / den`.
///
/// Agrees with [`predicted_orientation_bias`] modulo `pi/2` while `den > 0`;
/// for `A = B` it is `theta + epsilon / 2` at every position.
pub fn predicted_orientation_bias_principal(
    a: f64,
    b: f64,
    theta: f64,
    epsilon: f64,
    x: [f64; 2],
) -> Result<f64> {
    if epsilon.abs() >= FRAC_PI_4 {
        return Err(Error::InvalidParameter(format!(
            "|epsilon| = {} must stay below pi/4",
            epsilon.abs()
        )));
    }
    let (num, den) = bias_terms(a, b, theta, epsilon, x);
    if num == 0.0 {
        return Ok(theta);
    }
    Ok(theta + (num / den).atan() / 4.0)
}

/// Orientation estimate from the wave phases `p`, `q` at the sample:
/// `theta + arg[A^2 + B^2 e^{4 eps} - 2AB e^{2 eps} cos p cos q + AB I2 (e^{3 eps} - e^{eps}) sin p sin q] / 4`.
///
/// The cross terms carry `(e1 n_perp)^2 = -e^{2 eps} (e1 n)^2` and
/// `e1 n_perp = -I2 e^{eps} (e1 n)` through the products.
pub fn orientation_bias_exact(a: f64, b: f64, theta: f64, epsilon: f64, p: f64, q: f64) -> f64 {
    use crate::clifford::PlaneComplex as Z;
    let e = |k: f64| Z::from_angle(k * epsilon);
    let i2 = Z::new(0.0, 1.0);
    let z = Z::new(a * a, 0.0) + e(4.0).scale(b * b) + e(2.0).scale(-2.0 * a * b * p.cos() * q.cos())
        + i2 * (e(3.0) - e(1.0)).scale(a * b * p.sin() * q.sin());
    theta + z.arg_unchecked() / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_plane_wave_phase_matches_definition() {
        let g = plane_wave(256, 16.0, PI / 4.0, 0.0, 1).unwrap();
        assert_eq!(g.image, g.clean);
        let (s, c) = (PI / 4.0).sin_cos();
        for r in (0..256).step_by(17) {
            for col in (0..256).step_by(13) {
                let psi = 16.0 * (grid_coord(col, 256) * c + grid_coord(r, 256) * s);
                assert_eq!(g.phase.get(r, col), wrap_to_period(psi, 2.0 * PI));
                assert!((g.phase.get(r, col).cos() - g.clean.get(r, col)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = plane_wave(64, 8.0, 0.3, 0.5, 42).unwrap();
        let b = plane_wave(64, 8.0, 0.3, 0.5, 42).unwrap();
        assert_eq!(a.image, b.image);
        let c = plane_wave(64, 8.0, 0.3, 0.5, 43).unwrap();
        assert_ne!(a.image, c.image);
        let a = parabolic_chirp(64, 1.0, 0.5, 7).unwrap();
        let b = parabolic_chirp(64, 1.0, 0.5, 7).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn noise_has_requested_std() {
        let g = plane_wave(256, 16.0, PI / 4.0, 1.0, 5).unwrap();
        let d = g.image.zip_map(&g.clean, |a, b| a - b).unwrap();
        let (m, s) = crate::util::mean_std(d.as_slice());
        assert!(m.abs() < 0.02);
        assert!((s - 1.0).abs() <= 0.02);
    }

    #[test]
    fn chirp_center_and_edge_frequency() {
        let n = 256;
        let a = 8.0 / PI;
        let g = parabolic_chirp(n, a, 0.0, 0).unwrap();
        assert_eq!(g.phase.get(n / 2, n / 2), 0.0);
        assert!(chirp_max_frequency(n, a) < PI);
        // Finite-difference gradient at a grid point agrees with 2 a |x|.
        let (r, c) = (40usize, 200usize);
        let h = 2.0 * PI / n as f64;
        let psi = |r: usize, c: usize| {
            let (x, y) = (grid_coord(c, n), grid_coord(r, n));
            a * (x * x + y * y)
        };
        let gx = (psi(r, c + 1) - psi(r, c - 1)) / (2.0 * h);
        let gy = (psi(r + 1, c) - psi(r - 1, c)) / (2.0 * h);
        let (x, y) = (grid_coord(c, n), grid_coord(r, n));
        assert!((gx.hypot(gy) - 2.0 * a * x.hypot(y)).abs() < 1e-9);
        assert!(parabolic_chirp(n, 40.0, 0.0, 0).is_err());
    }

    #[test]
    fn pm_band_condition() {
        let n = 128;
        let zero = RealImage::zeros(n);
        let g = pm_signal(n, 32.0, 0.0, 0.0, &zero, 0.0, 0).unwrap();
        let carrier = plane_wave(n, 32.0, 0.0, 0.0, 0).unwrap();
        assert!(g.clean.relative_l2(&carrier.clean) < 1e-12);

        let ok = sinusoidal_message(n, 0.5, 4.0);
        assert!(band_violation(&ok, 32.0).unwrap() < BAND_TOLERANCE);
        assert!(pm_signal(n, 32.0, 0.0, 0.0, &ok, 0.0, 0).is_ok());

        let bad = sinusoidal_message(n, 0.5, 32.0);
        assert!(matches!(
            pm_signal(n, 32.0, 0.0, 0.0, &bad, 0.0, 0),
            Err(Error::BandLimit { .. })
        ));
    }

    #[test]
    fn ssim_properties() {
        // Locally zero-mean: a near-Nyquist pattern with a little noise.
        let a = RealImage::from_fn(64, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 })
            .zip_map(&gaussian_noise(64, 0.05, 1), |x, y| x + y)
            .unwrap();
        let b = gaussian_noise(64, 1.0, 2).zip_map(&a, |x, y| 0.5 * x + y).unwrap();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let neg = a.scale(-1.0);
        assert!(ssim(&a, &neg).unwrap() < 0.0);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12);
        assert!(ab < 1.0);
    }

    #[test]
    fn correlation_properties() {
        let a = gaussian_noise(256, 1.0, 3);
        assert!((correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            correlation(&a, &RealImage::filled(256, 2.0)),
            Err(Error::ZeroVariance)
        ));
        // A fixed pseudo-random permutation of the samples.
        let mut idx: Vec<usize> = (0..a.as_slice().len()).collect();
        let mut state = 12345u64;
        for i in (1..idx.len()).rev() {
            state = mix_seed(state, 0, i as u64);
            idx.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let shuffled: Vec<f64> = idx.iter().map(|&i| a.as_slice()[i]).collect();
        assert!(correlation_of(a.as_slice(), &shuffled).unwrap().abs() < 0.05);
    }

    #[test]
    fn bias_model_limits() {
        let theta = 0.4;
        for x in [[0.0, 0.0], [1.3, -2.2], [10.0, 4.0]] {
            assert_eq!(predicted_orientation_bias(1.0, 0.0, theta, 0.3, x).unwrap(), theta);
            for (a, b) in [(0.5, 2.0), (1.0, 1.0), (2.0, 0.5)] {
                let t = predicted_orientation_bias(a, b, theta, 0.0, x).unwrap();
                assert!((t - theta).abs() < 1e-15);
            }
            for eps in [-0.5, -0.2, 0.1, 0.7] {
                let t = predicted_orientation_bias_principal(1.5, 1.5, theta, eps, x).unwrap();
                assert!((t - (theta + eps / 2.0)).abs() < 1e-12);
            }
        }
        assert!(predicted_orientation_bias(1.0, 1.0, 0.0, 1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn exact_bias_reduces_to_model_at_zero_skew() {
        for (p, q) in [(0.3, 1.1), (2.0, -0.7), (-1.0, 2.5)] {
            let t = orientation_bias_exact(1.0, 0.7, 0.2, 0.0, p, q);
            assert!((t - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn fringe_pair_truth_registers_clean_images() {
        let n = 64;
        let (fixed, moving) = deformed_fringe_pair(n, FringeParams::default(), 0.0, 9).unwrap();
        let d = fixed.displacement.as_ref().unwrap();
        let mut peak = 0.0f64;
        for i in 0..n * n {
            peak = peak.max(d.dx.as_slice()[i].hypot(d.dy.as_slice()[i]));
        }
        assert!(peak <= 3.0 + 1e-9 && peak > 2.0);
        // Truth satisfies moving(x + d) == fixed(x) before discretization.
        let p = FringeParams::default();
        for (r, c) in [(10usize, 20usize), (33, 41), (50, 5)] {
            let (x, y) = (c as f64 + d.dx.get(r, c), r as f64 + d.dy.get(r, c));
            let (a, b) = unit_deformation(n, x, y);
            let mut pk = 0.0f64;
            for rr in 0..n {
                for cc in 0..n {
                    let (u, v) = unit_deformation(n, cc as f64, rr as f64);
                    pk = pk.max(u.hypot(v));
                }
            }
            let s = p.max_displacement / pk;
            let value = fringe_phase(n, p.period, x + a * s, y + b * s).cos();
            assert!((value - fixed.clean.get(r, c)).abs() < 1e-9);
        }
        assert_eq!(moving.image.shape(), (n, n));
    }
}
