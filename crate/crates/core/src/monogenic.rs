//! Riesz transform and monogenic amplitude / orientation / phase.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::Result;
use crate::spectral::{self, forward_fft, ComplexImage, Gain, RealImage, TransferMap};
use crate::util::wrap_to_period;

/// Fraction of the peak amplitude below which orientation is masked.
pub const LOW_AMPLITUDE_FRACTION: f64 = 1e-3;

/// Riesz component k: `-i u_k / |u|`, zero at DC.
pub(crate) fn riesz_gain(component: usize) -> Gain<impl Fn(f64, f64) -> Complex64> {
    Gain::new(
        move |u: f64, v: f64| {
            let r = u.hypot(v);
            let uk = if component == 0 { u } else { v };
            Complex64::new(0.0, -uk / r)
        },
        Complex64::new(0.0, 0.0),
    )
}

/// Both Riesz components of the image whose spectrum is `spec`.
pub(crate) fn riesz_from_spectrum(spec: &ComplexImage) -> Result<(RealImage, RealImage)> {
    let n = spec.side();
    let g1 = TransferMap::sample(n, &riesz_gain(0))?;
    let g2 = TransferMap::sample(n, &riesz_gain(1))?;
    Ok(spectral::inverse_real_pair(&g1.apply(spec)?, &g2.apply(spec)?))
}

/// Riesz transform `(R1 f, R2 f)`.
///
/// A cosine `cos(k . x)` maps to `(k / |k|) sin(k . x)`.
pub fn riesz(f: &RealImage) -> Result<(RealImage, RealImage)> {
    riesz_from_spectrum(&forward_fft(f)?)
}

/// Monogenic local features of one image.
#[derive(Clone, Debug)]
pub struct IapMono {
    pub amplitude: RealImage,
    /// Angle of the Riesz vector in `[0, 2 pi)`.
    pub orientation: RealImage,
    /// `atan2(|Rf|, f)` in `[0, pi]`.
    pub phase: RealImage,
    /// Set where `|Rf|` is below [`LOW_AMPLITUDE_FRACTION`] of the peak amplitude.
    pub low_amplitude_mask: Vec<bool>,
}

impl IapMono {
    /// Direction folded into `[0, pi)` and the phase signed relative to it.
    pub fn signed(&self) -> (RealImage, RealImage) {
        let n = self.amplitude.side();
        let mut dir = Vec::with_capacity(n * n);
        let mut phase = Vec::with_capacity(n * n);
        for (&o, &p) in self.orientation.as_slice().iter().zip(self.phase.as_slice()) {
            if o >= PI {
                dir.push(o - PI);
                phase.push(-p);
            } else {
                dir.push(o);
                phase.push(p);
            }
        }
        (
            RealImage::from_vec_unchecked(n, dir),
            RealImage::from_vec_unchecked(n, phase),
        )
    }
}

pub(crate) fn features_from_parts(f: &RealImage, r1: &RealImage, r2: &RealImage) -> IapMono {
    let n = f.side();
    let len = n * n;
    let (mut amp, mut ori, mut ph) = (
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
    );
    let mut odd = Vec::with_capacity(len);
    for ((&fv, &a), &b) in f.as_slice().iter().zip(r1.as_slice()).zip(r2.as_slice()) {
        let rn = a.hypot(b);
        amp.push((fv * fv + a * a + b * b).sqrt());
        ori.push(wrap_to_period(b.atan2(a), 2.0 * PI));
        ph.push(rn.atan2(fv));
        odd.push(rn);
    }
    let eps = LOW_AMPLITUDE_FRACTION * amp.iter().fold(0.0f64, |m, &v| m.max(v));
    let mask = odd.iter().map(|&r| r < eps || r == 0.0).collect();
    IapMono {
        amplitude: RealImage::from_vec_unchecked(n, amp),
        orientation: RealImage::from_vec_unchecked(n, ori),
        phase: RealImage::from_vec_unchecked(n, ph),
        low_amplitude_mask: mask,
    }
}

pub fn monogenic_features(f: &RealImage) -> Result<IapMono> {
    f.require_square()?;
    let (r1, r2) = riesz(f)?;
    Ok(features_from_parts(f, &r1, &r2))
}
