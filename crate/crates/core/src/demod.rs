//! Phase demodulation of a known carrier.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiscale::{Analyzer, Backend, QualityKind};
use crate::spectral::{forward_fft, RealImage};
use crate::steerable::FrameSpec;
use crate::util::{grid_coord, wrap_to_pi};

/// Carrier `cos(omega_c (x cos theta_c + y sin theta_c) + phi_c)` on the
/// physical grid; `omega_c` counts cycles per image side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    pub omega_c: f64,
    pub theta_c: f64,
    pub phi_c: f64,
}

impl CarrierSpec {
    pub fn new(omega_c: f64, theta_c: f64, phi_c: f64) -> Result<Self> {
        if !omega_c.is_finite() || omega_c <= 0.0 {
            return Err(Error::InvalidParameter(format!("carrier frequency {omega_c} must be positive")));
        }
        Ok(Self {
            omega_c,
            theta_c,
            phi_c,
        })
    }

    /// Carrier phase ramp sampled on an `n x n` grid.
    pub fn ramp(&self, n: usize) -> RealImage {
        let (s, c) = self.theta_c.sin_cos();
        RealImage::from_fn(n, |r, col| {
            self.omega_c * (grid_coord(col, n) * c + grid_coord(r, n) * s) + self.phi_c
        })
    }
}

#[derive(Clone, Debug)]
pub struct DemodResult {
    /// Recovered message in `(-pi, pi]`.
    pub message_est: RealImage,
    pub quality: QualityKind,
    pub k_map: Vec<usize>,
}

/// SMV-backend demodulation.
pub fn demodulate(pm: &RealImage, carrier: &CarrierSpec, frame: &FrameSpec, quality: QualityKind) -> Result<DemodResult> {
    let analyzer = Analyzer::new(frame, Backend::Smv)?;
    demodulate_with(&analyzer, pm, carrier, quality)
}

/// `wrap(Phi_Q - carrier ramp)` with the phase signed along the carrier direction.
pub fn demodulate_with(
    analyzer: &Analyzer,
    pm: &RealImage,
    carrier: &CarrierSpec,
    quality: QualityKind,
) -> Result<DemodResult> {
    let n = pm.require_square()?;
    let (features, _) = analyzer.analyze(pm, quality)?;
    let reference = RealImage::filled(n, carrier.theta_c);
    let phase = features.aligned_phase(&reference)?;
    let ramp = carrier.ramp(n);
    let message_est = phase.zip_map(&ramp, |p, r| wrap_to_pi(p - r))?;
    Ok(DemodResult {
        message_est,
        quality,
        k_map: features.k_map,
    })
}

/// Relative margin under which a second spectral peak counts as ambiguous.
pub const PEAK_AMBIGUITY: f64 = 0.01;

/// Carrier from the strongest non-DC bin; advisory for real data.
pub fn estimate_carrier(pm: &RealImage) -> Result<CarrierSpec> {
    let n = pm.require_square()?;
    let spec = forward_fft(pm)?;
    let signed = |k: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
    let mut bins: Vec<(f64, i64, i64, usize, usize)> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let (kx, ky) = (signed(c), signed(r));
            // One representative per conjugate pair: direction in [0, pi).
            if ky < 0 || (ky == 0 && kx <= 0) {
                continue;
            }
            bins.push((spec.get(r, c).norm(), kx, ky, r, c));
        }
    }
    bins.sort_by(|a, b| b.0.total_cmp(&a.0));
    let peak = bins.first().copied().ok_or(Error::NoPeak)?;
    let total = spec.get(0, 0).norm() + peak.0;
    if peak.0 <= 1e-12 * total.max(f64::MIN_POSITIVE) {
        return Err(Error::NoPeak);
    }
    if let Some(second) = bins.iter().skip(1).find(|b| {
        let near = (b.1 - peak.1).abs() <= 1 && (b.2 - peak.2).abs() <= 1;
        !near
    }) {
        if second.0 >= (1.0 - PEAK_AMBIGUITY) * peak.0 {
            return Err(Error::AmbiguousPeak {
                first: (peak.1, peak.2),
                second: (second.1, second.2),
            });
        }
    }
    let (kx, ky) = (peak.1 as f64, peak.2 as f64);
    let z = spec.get(peak.3, peak.4);
    // The grid starts at -pi, which shifts the bin phase by -pi (kx + ky).
    let phi = wrap_to_pi(z.arg() + PI * (kx + ky));
    CarrierSpec::new(kx.hypot(ky), ky.atan2(kx), phi)
}
