//! Fine-scale deformable registration from local phase differences.
//!
//! For coarsely aligned images `fixed` and `moving`, the displacement `d`
//! with `moving(x + d) ~ fixed(x)` is estimated along the local ridge normal
//! `n(x)` as `d = wrap(Phi_f - Phi_m) / omega * n`, where `omega` is the local
//! ridge frequency in radians per pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiscale::{align_phase, Analyzer, QualityKind};
use crate::spectral::RealImage;
use crate::synthlab::correlation_of;
use crate::util::{interior_mask, percentile, wrap_to_pi};

/// Lower clamp on the local frequency, radians per pixel.
pub const OMEGA_MIN: f64 = 2.0 * std::f64::consts::PI / 64.0;

/// Per-pixel displacement in pixels (`dx` along columns, `dy` along rows).
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub dx: RealImage,
    pub dy: RealImage,
}

impl DisplacementField {
    pub fn zeros(n: usize) -> Self {
        Self {
            dx: RealImage::zeros(n),
            dy: RealImage::zeros(n),
        }
    }

    pub fn side(&self) -> usize {
        self.dx.side()
    }
}

/// Which phase the local frequency is differentiated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqSource {
    /// Ridge frequency of the fixed image's phase.
    Fixed,
    /// Gradient of the phase difference itself.
    Delta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterParams {
    pub quality: QualityKind,
    /// Window for unwrapping and frequency estimation (odd).
    pub window: usize,
    /// Pixels whose quality is below this percentile get zero displacement.
    pub mask_percentile: f64,
    pub freq_source: FreqSource,
    /// Warp-and-re-estimate passes; one pass is the plain method.
    pub iterations: usize,
}

impl Default for RegisterParams {
    fn default() -> Self {
        Self {
            quality: QualityKind::Product,
            window: 7,
            mask_percentile: 60.0,
            freq_source: FreqSource::Fixed,
            iterations: 1,
        }
    }
}

/// Phases of both images signed along the fixed image's direction.
#[derive(Clone, Debug)]
pub struct PhasePair {
    pub phi_f: RealImage,
    pub phi_m: RealImage,
    /// Fixed-image direction in `[0, pi)`.
    pub theta: RealImage,
    /// Pointwise minimum of the two winning quality maps.
    pub q: RealImage,
}

pub fn phase_pair(fixed: &RealImage, moving: &RealImage, analyzer: &Analyzer, kind: QualityKind) -> Result<PhasePair> {
    fixed.check_same_shape(moving)?;
    let (ff, _) = analyzer.analyze(fixed, kind)?;
    let (fm, _) = analyzer.analyze(moving, kind)?;
    let phi_m = align_phase(&fm.phase, &fm.direction, &ff.direction)?;
    let q = ff.quality.zip_map(&fm.quality, f64::min)?;
    Ok(PhasePair {
        phi_f: ff.phase,
        phi_m,
        theta: ff.direction,
        q,
    })
}

/// `wrap(phi_f - phi_m)` into `(-pi, pi]`.
pub fn wrapped_difference(phi_f: &RealImage, phi_m: &RealImage) -> Result<RealImage> {
    phi_f.zip_map(phi_m, |a, b| wrap_to_pi(a - b))
}

fn odd(w: usize) -> usize {
    if w.is_multiple_of(2) {
        w + 1
    } else {
        w.max(1)
    }
}

/// Local unwrapping: neighbors are moved onto the center's branch before the
/// window mean is taken. Affine fields pass through unchanged away from the
/// borders; values are never globally consistent.
pub fn windowed_unwrap(delta: &RealImage, w: usize) -> RealImage {
    let n = delta.side();
    let half = odd(w) / 2;
    let d = delta.as_slice();
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(n));
        for c in 0..n {
            let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(n));
            let centre = d[r * n + c];
            let mut acc = 0.0;
            for rr in r0..r1 {
                for cc in c0..c1 {
                    acc += wrap_to_pi(d[rr * n + cc] - centre);
                }
            }
            out.push(centre + acc / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    RealImage::from_vec_unchecked(n, out)
}

/// Directional derivative of a wrapped phase along `theta`, radians per pixel.
///
/// Neighbors are brought onto the center's branch (and re-signed where their
/// direction is flipped relative to the center's), then a plane is fitted by
/// least squares over a `w x w` window. Results are clamped below by
/// [`OMEGA_MIN`].
pub fn local_frequency(phase: &RealImage, theta: &RealImage, w: usize) -> Result<RealImage> {
    phase.check_same_shape(theta)?;
    let n = phase.side();
    let half = odd(w) / 2;
    let (p, t) = (phase.as_slice(), theta.as_slice());
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(n));
        for c in 0..n {
            let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(n));
            let i = r * n + c;
            let (centre, dir) = (p[i], t[i]);
            let (mut sx, mut sy, mut sv, mut sxx, mut syy, mut sxy, mut sxv, mut syv) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            let mut count = 0.0;
            for rr in r0..r1 {
                for cc in c0..c1 {
                    let j = rr * n + cc;
                    let pj = if (t[j] - dir).cos() < 0.0 { -p[j] } else { p[j] };
                    let v = wrap_to_pi(pj - centre);
                    let (x, y) = (cc as f64 - c as f64, rr as f64 - r as f64);
                    sx += x;
                    sy += y;
                    sv += v;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                    sxv += x * v;
                    syv += y * v;
                    count += 1.0;
                }
            }
            // Centered normal equations for the plane v = a + gx x + gy y.
            let cxx = sxx - sx * sx / count;
            let cyy = syy - sy * sy / count;
            let cxy = sxy - sx * sy / count;
            let cxv = sxv - sx * sv / count;
            let cyv = syv - sy * sv / count;
            let det = cxx * cyy - cxy * cxy;
            let omega = if det.abs() > 1e-12 {
                let gx = (cyy * cxv - cxy * cyv) / det;
                let gy = (cxx * cyv - cxy * cxv) / det;
                gx * dir.cos() + gy * dir.sin()
            } else {
                0.0
            };
            out.push(omega.max(OMEGA_MIN));
        }
    }
    Ok(RealImage::from_vec_unchecked(n, out))
}

/// `d = delta_u / omega * (cos theta, sin theta)` where `q >= threshold`, zero elsewhere.
pub fn displacement(
    delta_u: &RealImage,
    omega: &RealImage,
    theta: &RealImage,
    q: &RealImage,
    threshold: f64,
) -> Result<DisplacementField> {
    delta_u.check_same_shape(omega)?;
    delta_u.check_same_shape(theta)?;
    delta_u.check_same_shape(q)?;
    let n = delta_u.side();
    let mut dx = Vec::with_capacity(n * n);
    let mut dy = Vec::with_capacity(n * n);
    for i in 0..n * n {
        if q.as_slice()[i] >= threshold {
            let m = delta_u.as_slice()[i] / omega.as_slice()[i].max(OMEGA_MIN);
            let (s, c) = theta.as_slice()[i].sin_cos();
            dx.push(m * c);
            dy.push(m * s);
        } else {
            dx.push(0.0);
            dy.push(0.0);
        }
    }
    Ok(DisplacementField {
        dx: RealImage::from_vec_unchecked(n, dx),
        dy: RealImage::from_vec_unchecked(n, dy),
    })
}

/// Bilinear sample of `img` at fractional `(row, col)`, clamped to the edges.
#[inline]
pub fn bilinear(img: &RealImage, row: f64, col: f64) -> f64 {
    let n = img.side();
    let max = (n - 1) as f64;
    let (y, x) = (row.clamp(0.0, max), col.clamp(0.0, max));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(n - 1), (x0 + 1).min(n - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
    let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// `moving(x + d(x))` by bilinear interpolation.
pub fn warp(moving: &RealImage, d: &DisplacementField) -> Result<RealImage> {
    moving.check_same_shape(&d.dx)?;
    moving.check_same_shape(&d.dy)?;
    Ok(RealImage::from_fn(moving.side(), |r, c| {
        bilinear(moving, r as f64 + d.dy.get(r, c), c as f64 + d.dx.get(r, c))
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub corr_before: f64,
    pub corr_after: f64,
    /// Fraction of pixels in the evaluation mask.
    pub mask_coverage: f64,
    pub displacement_rms: Option<f64>,
}

/// Known displacement and the true ridge normal it is projected on.
pub struct Truth<'a> {
    pub field: &'a DisplacementField,
    pub normal: &'a RealImage,
}

/// Correlations over `mask` and, given the truth, the RMS of `estimate`
/// against the normal component of the true displacement.
pub fn assess(
    fixed: &RealImage,
    moving: &RealImage,
    registered: &RealImage,
    mask: &[bool],
    estimate: &DisplacementField,
    truth: Option<Truth<'_>>,
) -> Result<RegistrationReport> {
    fixed.check_same_shape(moving)?;
    fixed.check_same_shape(registered)?;
    let n = fixed.side();
    if mask.len() != n * n {
        return Err(Error::InvalidParameter("mask length does not match image".into()));
    }
    let pick = |img: &RealImage| -> Vec<f64> {
        img.as_slice()
            .iter()
            .zip(mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    };
    let f = pick(fixed);
    let corr_before = correlation_of(&f, &pick(moving))?;
    let corr_after = correlation_of(&f, &pick(registered))?;
    let covered = mask.iter().filter(|&&m| m).count();
    let displacement_rms = match truth {
        None => None,
        Some(t) => {
            let mut sq = 0.0;
            for i in (0..n * n).filter(|&i| mask[i]) {
                let (s, c) = t.normal.as_slice()[i].sin_cos();
                let proj = t.field.dx.as_slice()[i] * c + t.field.dy.as_slice()[i] * s;
                let ex = estimate.dx.as_slice()[i] - proj * c;
                let ey = estimate.dy.as_slice()[i] - proj * s;
                sq += ex * ex + ey * ey;
            }
            Some((sq / covered.max(1) as f64).sqrt())
        }
    };
    Ok(RegistrationReport {
        corr_before,
        corr_after,
        mask_coverage: covered as f64 / (n * n) as f64,
        displacement_rms,
    })
}

/// Everything produced by one registration run.
#[derive(Clone, Debug)]
pub struct Registration {
    pub field: DisplacementField,
    pub registered: RealImage,
    /// Quality mask restricted to the interior.
    pub mask: Vec<bool>,
    pub q: RealImage,
    pub theta: RealImage,
}

/// Phase-difference registration of `moving` onto `fixed`.
pub fn register(
    fixed: &RealImage,
    moving: &RealImage,
    analyzer: &Analyzer,
    params: &RegisterParams,
) -> Result<Registration> {
    let n = fixed.require_square()?;
    fixed.check_same_shape(moving)?;
    let margin = analyzer.spec().interior_margin();
    let interior = interior_mask(n, margin);
    let mut field = DisplacementField::zeros(n);
    let mut current = moving.clone();
    let mut last = None;
    for _ in 0..params.iterations.max(1) {
        let pair = phase_pair(fixed, &current, analyzer, params.quality)?;
        let delta = wrapped_difference(&pair.phi_f, &pair.phi_m)?;
        let delta_u = windowed_unwrap(&delta, params.window);
        let omega = match params.freq_source {
            FreqSource::Fixed => local_frequency(&pair.phi_f, &pair.theta, params.window)?,
            FreqSource::Delta => local_frequency(&delta_u, &pair.theta, params.window)?,
        };
        let inside: Vec<f64> = pair
            .q
            .as_slice()
            .iter()
            .zip(&interior)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect();
        let threshold = percentile(&inside, params.mask_percentile);
        let step = displacement(&delta_u, &omega, &pair.theta, &pair.q, threshold)?;
        field = DisplacementField {
            dx: field.dx.zip_map(&step.dx, |a, b| a + b)?,
            dy: field.dy.zip_map(&step.dy, |a, b| a + b)?,
        };
        current = warp(moving, &field)?;
        last = Some((pair, threshold));
    }
    let (pair, threshold) = last.expect("at least one pass");
    let mask = pair
        .q
        .as_slice()
        .iter()
        .zip(&interior)
        .map(|(&q, &m)| m && q >= threshold)
        .collect();
    Ok(Registration {
        field,
        registered: current,
        mask,
        q: pair.q,
        theta: pair.theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiscale::Backend;
    use crate::steerable::FrameSpec;
    use crate::synthlab::gaussian_noise;
    use std::f64::consts::PI;

    #[test]
    fn wrapped_difference_examples() {
        let a = RealImage::filled(4, 1.0);
        assert!(wrapped_difference(&a, &a).unwrap().max_abs() == 0.0);
        let b = RealImage::filled(4, 0.0);
        let c = RealImage::filled(4, PI + 0.1);
        let d = wrapped_difference(&c, &b).unwrap();
        assert!((d.get(0, 0) - (-PI + 0.1)).abs() < 1e-12);
        let e = wrapped_difference(&c.map(|v| v + 2.0 * PI), &b).unwrap();
        assert!((e.get(1, 1) - d.get(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn unwrap_passes_affine_fields_and_crosses_wraps() {
        let n = 32;
        let smooth = RealImage::from_fn(n, |r, c| 0.02 * r as f64 - 0.01 * c as f64);
        let u = windowed_unwrap(&smooth, 5);
        for r in 2..n - 2 {
            for c in 2..n - 2 {
                assert!((u.get(r, c) - smooth.get(r, c)).abs() < 1e-12);
            }
        }
        // A ramp of slope 0.7 wrapped into (-pi, pi]: local derivative stays 0.7.
        let wrapped = RealImage::from_fn(n, |_, c| wrap_to_pi(0.7 * c as f64));
        let theta = RealImage::zeros(n);
        let w = local_frequency(&wrapped, &theta, 5).unwrap();
        for r in 0..n {
            for c in 2..n - 2 {
                assert!((w.get(r, c) - 0.7).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unwrap_is_total_on_checkerboard() {
        let n = 16;
        let chk = RealImage::from_fn(n, |r, c| if (r + c) % 2 == 0 { PI } else { -PI + 1e-9 });
        let u = windowed_unwrap(&chk, 3);
        assert!(u.as_slice().iter().all(|v| v.is_finite() && v.abs() <= 2.0 * PI));
    }

    #[test]
    fn frequency_of_constant_is_clamped() {
        let w = local_frequency(&RealImage::filled(16, 0.4), &RealImage::zeros(16), 5).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == OMEGA_MIN));
    }

    #[test]
    fn displacement_masking_and_direction() {
        let n = 8;
        let q = RealImage::from_fn(n, |r, _| r as f64);
        let theta = RealImage::from_fn(n, |r, c| 0.1 * (r * n + c) as f64);
        let du = RealImage::filled(n, 0.3);
        let om = RealImage::filled(n, 0.5);
        let d = displacement(&du, &om, &theta, &q, 4.0).unwrap();
        for r in 0..n {
            for c in 0..n {
                let (x, y) = (d.dx.get(r, c), d.dy.get(r, c));
                if r < 4 {
                    assert!(x == 0.0 && y == 0.0);
                } else {
                    let (s, co) = theta.get(r, c).sin_cos();
                    assert!((x * s - y * co).abs() <= 1e-15);
                    assert!((x.hypot(y) - 0.6).abs() < 1e-12);
                }
            }
        }
        let zero = displacement(&RealImage::zeros(n), &om, &theta, &q, 0.0).unwrap();
        assert_eq!(zero, DisplacementField::zeros(n));
    }

    #[test]
    fn warp_examples() {
        let n = 16;
        let f = gaussian_noise(n, 1.0, 1);
        assert_eq!(warp(&f, &DisplacementField::zeros(n)).unwrap(), f);
        let shift = DisplacementField {
            dx: RealImage::filled(n, 1.0),
            dy: RealImage::zeros(n),
        };
        let g = warp(&f, &shift).unwrap();
        for r in 0..n {
            for c in 0..n - 1 {
                assert_eq!(g.get(r, c), f.get(r, c + 1));
            }
        }
        let ramp = RealImage::from_fn(n, |r, c| 2.0 * c as f64 - 0.5 * r as f64 + 1.0);
        let half = DisplacementField {
            dx: RealImage::filled(n, 0.5),
            dy: RealImage::filled(n, 0.5),
        };
        let h = warp(&ramp, &half).unwrap();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let expect = 2.0 * (c as f64 + 0.5) - 0.5 * (r as f64 + 0.5) + 1.0;
                assert!((h.get(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    fn wave(n: usize, period: f64, theta: f64, shift: f64) -> RealImage {
        let (s, c) = theta.sin_cos();
        RealImage::from_fn(n, |r, col| {
            (2.0 * PI / period * ((col as f64) * c + (r as f64) * s + shift)).cos()
        })
    }

    #[test]
    fn plane_wave_translation_is_recovered() {
        let n = 128;
        let theta = 0.5;
        let spec = FrameSpec::for_side(n).unwrap();
        let a = Analyzer::new(&spec, Backend::Smv).unwrap();
        let fixed = wave(n, 12.0, theta, 0.0);
        let t = 1.3;
        // moving(x) = fixed(x - t n), so moving(x + t n) = fixed(x).
        let moving = wave(n, 12.0, theta, -t);
        let pair = phase_pair(&fixed, &moving, &a, QualityKind::Product).unwrap();
        let delta = wrapped_difference(&pair.phi_f, &pair.phi_m).unwrap();
        let m = spec.interior_margin();
        let omega = 2.0 * PI / 12.0;
        let du = windowed_unwrap(&delta, 7);
        let w = local_frequency(&pair.phi_f, &pair.theta, 7).unwrap();
        let d = displacement(&du, &w, &pair.theta, &pair.q, f64::MIN).unwrap();
        for r in m..n - m {
            for c in m..n - m {
                assert!((delta.get(r, c) - omega * t).abs() < 0.05);
                assert!(((w.get(r, c) - omega) / omega).abs() < 0.05);
                let along = d.dx.get(r, c) * theta.cos() + d.dy.get(r, c) * theta.sin();
                assert!((along - t).abs() <= 0.25);
            }
        }
    }

    #[test]
    fn self_registration_is_trivial() {
        let n = 64;
        let spec = FrameSpec::for_side(n).unwrap();
        let a = Analyzer::new(&spec, Backend::Smv).unwrap();
        let f = wave(n, 10.0, 1.0, 0.0);
        let pair = phase_pair(&f, &f, &a, QualityKind::Product).unwrap();
        assert_eq!(pair.phi_f, pair.phi_m);
        let reg = register(&f, &f, &a, &RegisterParams::default()).unwrap();
        assert!(reg.field.dx.max_abs() == 0.0 && reg.field.dy.max_abs() == 0.0);
        let rep = assess(&f, &f, &reg.registered, &reg.mask, &reg.field, None).unwrap();
        assert!((rep.corr_after - 1.0).abs() < 1e-12);
    }
}
