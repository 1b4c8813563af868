//! Structure multivector: seven-component Cl(3) response, the robust
//! orientation estimate, local angular filters and the major/minor
//! amplitude-phase features.
//!
//! For a single wave `cos(psi)` whose frequency vector has angle `alpha`, the
//! components satisfy
//!
//! ```text
//! M1  + M2  I2 = exp( alpha I2) sin(psi)
//! M0  + M12 I2 = exp(2alpha I2) cos(psi)
//! M31 - M23 I2 = exp(3alpha I2) sin(psi)
//! M3           = cos(psi)
//! ```
//!
//! and superpositions add linearly. The first-, second- and third-order
//! responses are the circular harmonics `u/|u|`, `(u^2 - v^2, 2uv)/|u|^2` and
//! `(u^3 - 3uv^2, 3u^2 v - v^3)/|u|^3`, the odd ones carrying a `-i` factor.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::clifford::PlaneComplex;
use crate::error::Result;
use crate::spectral::{self, forward_fft, ComplexImage, Gain, RealImage, TransferMap};
use crate::util::wrap_to_period;

/// Multiple of the image energy below which `|z|` of the orientation estimate
/// is treated as zero.
pub const ORIENTATION_EPS: f64 = 1e-6;

/// The seven SMV components.
#[derive(Clone, Debug)]
pub struct SmvField {
    pub m0: RealImage,
    pub m1: RealImage,
    pub m2: RealImage,
    pub m3: RealImage,
    pub m23: RealImage,
    pub m31: RealImage,
    pub m12: RealImage,
}

impl SmvField {
    pub fn side(&self) -> usize {
        self.m3.side()
    }

    /// `(M1 + M2 I2, M0 + M12 I2, M31 - M23 I2)` at sample `i`.
    #[inline]
    pub fn planes(&self, i: usize) -> (PlaneComplex, PlaneComplex, PlaneComplex) {
        (
            PlaneComplex::new(self.m1.as_slice()[i], self.m2.as_slice()[i]),
            PlaneComplex::new(self.m0.as_slice()[i], self.m12.as_slice()[i]),
            PlaneComplex::new(self.m31.as_slice()[i], -self.m23.as_slice()[i]),
        )
    }
}

/// Per-pixel orientation estimate `theta_e` in `[0, pi/2)`.
#[derive(Clone, Debug)]
pub struct OrientationMap {
    pub theta_e: RealImage,
    /// Pixels where the estimate is 0/0; their angle is reported as 0.
    pub undefined: Vec<bool>,
}

/// Sampled frequency responses of the six filtered SMV components.
#[derive(Clone, Debug)]
pub struct SmvKernels {
    m1: TransferMap,
    m2: TransferMap,
    m0: TransferMap,
    m12: TransferMap,
    m31: TransferMap,
    m23: TransferMap,
}

fn kernel(n: usize, f: impl Fn(f64, f64) -> Complex64) -> Result<TransferMap> {
    TransferMap::sample(n, &Gain::new(f, Complex64::new(0.0, 0.0)))
}

impl SmvKernels {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            m1: kernel(n, |u, v| Complex64::new(0.0, -u / u.hypot(v)))?,
            m2: kernel(n, |u, v| Complex64::new(0.0, -v / u.hypot(v)))?,
            m0: kernel(n, |u, v| Complex64::new((u * u - v * v) / (u * u + v * v), 0.0))?,
            m12: kernel(n, |u, v| Complex64::new(2.0 * u * v / (u * u + v * v), 0.0))?,
            m31: kernel(n, |u, v| {
                let r = u.hypot(v);
                Complex64::new(0.0, -(u * u * u - 3.0 * u * v * v) / (r * r * r))
            })?,
            m23: kernel(n, |u, v| {
                let r = u.hypot(v);
                Complex64::new(0.0, (3.0 * u * u * v - v * v * v) / (r * r * r))
            })?,
        })
    }

    pub fn side(&self) -> usize {
        self.m1.side()
    }

    /// SMV of the image with spectrum `spec`; `m3` must be that image.
    pub fn transform(&self, spec: &ComplexImage, m3: RealImage) -> Result<SmvField> {
        let (m1, m2) = spectral::inverse_real_pair(&self.m1.apply(spec)?, &self.m2.apply(spec)?);
        let (m0, m12) =
            spectral::inverse_real_pair(&self.m0.apply(spec)?, &self.m12.apply(spec)?);
        let (m31, m23) =
            spectral::inverse_real_pair(&self.m31.apply(spec)?, &self.m23.apply(spec)?);
        Ok(SmvField {
            m0,
            m1,
            m2,
            m3,
            m23,
            m31,
            m12,
        })
    }
}

pub fn smv_transform(f: &RealImage) -> Result<SmvField> {
    let n = f.require_square()?;
    let spec = forward_fft(f)?;
    SmvKernels::new(n)?.transform(&spec, f.clone())
}

/// The orientation `z = (M0 + M12 I2)^2 + (M1 + M2 I2)(M31 - M23 I2)`.
#[inline]
pub fn orientation_plane(m: &SmvField, i: usize) -> PlaneComplex {
    let (odd1, even2, odd3) = m.planes(i);
    even2 * even2 + odd1 * odd3
}

pub fn orientation_estimate(m: &SmvField) -> OrientationMap {
    let n = m.side();
    let len = n * n;
    let energy = (m.m3.energy() + m.m1.energy() + m.m2.energy()) / len as f64;
    let eps = ORIENTATION_EPS * energy;
    let mut theta = Vec::with_capacity(len);
    let mut undefined = Vec::with_capacity(len);
    for i in 0..len {
        let z = orientation_plane(m, i);
        if z.norm() <= eps {
            theta.push(0.0);
            undefined.push(true);
        } else {
            theta.push(wrap_to_period(z.arg_unchecked() / 4.0, FRAC_PI_2));
            undefined.push(false);
        }
    }
    OrientationMap {
        theta_e: RealImage::from_vec_unchecked(n, theta),
        undefined,
    }
}

/// Outputs of the local angular filters: even parts `w1`, `w2` and their
/// odd (`I2`) counterparts `w3`, `w4`.
#[derive(Clone, Debug)]
pub struct AngularFilters {
    pub w1: RealImage,
    pub w2: RealImage,
    pub w3: RealImage,
    pub w4: RealImage,
}

pub fn angular_filters(m: &SmvField, th: &OrientationMap) -> AngularFilters {
    let n = m.side();
    let len = n * n;
    let (mut w1, mut w2, mut w3, mut w4) = (
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
    );
    let s = |img: &RealImage, i: usize| img.as_slice()[i];
    for i in 0..len {
        let t = th.theta_e.as_slice()[i];
        let (s1, c1) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        let (s3, c3) = (3.0 * t).sin_cos();
        let (m0, m1, m2, m3) = (s(&m.m0, i), s(&m.m1, i), s(&m.m2, i), s(&m.m3, i));
        let (m12, m23, m31) = (s(&m.m12, i), s(&m.m23, i), s(&m.m31, i));
        let even = c2 * m0 + s2 * m12;
        w1.push((m3 + even) / 2.0);
        w2.push((m3 - even) / 2.0);
        w3.push((3.0 * (c1 * m1 + s1 * m2) + c3 * m31 - s3 * m23) / 4.0);
        w4.push((3.0 * (-s1 * m1 + c1 * m2) + s3 * m31 + c3 * m23) / 4.0);
    }
    AngularFilters {
        w1: RealImage::from_vec_unchecked(n, w1),
        w2: RealImage::from_vec_unchecked(n, w2),
        w3: RealImage::from_vec_unchecked(n, w3),
        w4: RealImage::from_vec_unchecked(n, w4),
    }
}

/// Major/minor instantaneous amplitude and phase.
#[derive(Clone, Debug)]
pub struct IapFeatures {
    pub major_amp: RealImage,
    pub major_phase: RealImage,
    pub minor_amp: RealImage,
    pub minor_phase: RealImage,
    pub theta_e: OrientationMap,
    /// 1 when `F1 = W1 + W3 I2` dominates, 2 when `F2 = W2 + W4 I2` does.
    pub dominance: Vec<u8>,
}

impl IapFeatures {
    /// Direction in `[0, pi)` against which the major phase is measured:
    /// `theta_e` for `F1`, `theta_e + pi/2` for `F2`.
    pub fn major_direction(&self) -> RealImage {
        let n = self.major_amp.side();
        let dir = self
            .theta_e
            .theta_e
            .as_slice()
            .iter()
            .zip(&self.dominance)
            .map(|(&t, &d)| if d == 1 { t } else { t + FRAC_PI_2 })
            .collect();
        RealImage::from_vec_unchecked(n, dir)
    }
}

#[inline]
fn phase_of(even: f64, odd: f64) -> f64 {
    let a = odd.atan2(even);
    if a <= -PI {
        PI
    } else {
        a
    }
}

pub fn iap(w: &AngularFilters, th: OrientationMap) -> IapFeatures {
    let n = w.w1.side();
    let len = n * n;
    let mut out = [
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
    ];
    let mut dominance = Vec::with_capacity(len);
    for i in 0..len {
        let (e1, o1) = (w.w1.as_slice()[i], w.w3.as_slice()[i]);
        let (e2, o2) = (w.w2.as_slice()[i], w.w4.as_slice()[i]);
        let a1 = e1.hypot(o1);
        let a2 = e2.hypot(o2);
        let (p1, p2) = (phase_of(e1, o1), phase_of(e2, o2));
        let (d, big, bp, small, sp) = if a1 >= a2 {
            (1, a1, p1, a2, p2)
        } else {
            (2, a2, p2, a1, p1)
        };
        out[0].push(big);
        out[1].push(bp);
        out[2].push(small);
        out[3].push(sp);
        dominance.push(d);
    }
    let [a, p, b, q] = out;
    IapFeatures {
        major_amp: RealImage::from_vec_unchecked(n, a),
        major_phase: RealImage::from_vec_unchecked(n, p),
        minor_amp: RealImage::from_vec_unchecked(n, b),
        minor_phase: RealImage::from_vec_unchecked(n, q),
        theta_e: th,
        dominance,
    }
}

/// Full chain from an SMV to its IAP features.
pub fn features(m: &SmvField) -> IapFeatures {
    let th = orientation_estimate(m);
    let w = angular_filters(m, &th);
    iap(&w, th)
}

pub fn smv_features(f: &RealImage) -> Result<IapFeatures> {
    Ok(features(&smv_transform(f)?))
}
