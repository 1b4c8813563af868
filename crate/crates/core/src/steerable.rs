//! Isotropic tight wavelet frames: radial band-pass windows whose squares sum
//! to one at every frequency, with optional per-dyadic low-pass extras.
//!
//! Dyadic scale `s` (from `m_min` up to `m_max`) peaks at radius
//! `pi / 2^(m_max - s)`; `s = m_max` is the finest scale and its top sub-band
//! is an open high-pass. Each dyadic octave is split into `k_sub` equal
//! log-radius slices. Transitions are raised-cosine: a window rises as
//! `sin(pi/2 * nu(t))` and falls as `cos(pi/2 * nu(t))` with the smoothstep
//! `nu(t) = t^2 (3 - 2t)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, forward_fft, frequency_grid, ComplexImage, RealImage, TransferMap};

/// Frame layout: dyadic scales `m_min..=m_max`, `k_sub` subscales each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub m_min: u32,
    pub m_max: u32,
    pub k_sub: u32,
    pub overcomplete: bool,
}

impl FrameSpec {
    /// Defaults for a `2^m_max` image: `m_min = 3`, two subscales.
    pub fn for_side(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let m_max = n.trailing_zeros();
        Ok(Self {
            m_min: 3.min(m_max),
            m_max,
            k_sub: 2,
            overcomplete: false,
        })
    }

    pub fn with_overcomplete(mut self, on: bool) -> Self {
        self.overcomplete = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_min < 1 {
            return Err(Error::InvalidFrame("m_min must be at least 1".into()));
        }
        if self.m_min > self.m_max {
            return Err(Error::InvalidFrame(format!(
                "m_min {} exceeds m_max {}",
                self.m_min, self.m_max
            )));
        }
        if self.k_sub < 1 {
            return Err(Error::InvalidFrame("k_sub must be at least 1".into()));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        1usize << self.m_max
    }

    pub fn band_count(&self) -> usize {
        ((self.m_max - self.m_min + 1) * self.k_sub) as usize
    }

    /// Dyadic scales that receive an overcomplete low-pass feature band.
    pub fn extra_scales(&self) -> Vec<u32> {
        if self.overcomplete {
            (self.m_min..self.m_max).rev().collect()
        } else {
            Vec::new()
        }
    }

    /// Peak wavelength `2^(m_max - s + 1)` pixels of dyadic scale `s`.
    pub fn wavelength(&self, s: u32) -> usize {
        1usize << (self.m_max - s + 1)
    }

    /// Orientation-statistics window for scale `s`: two peak wavelengths, made odd.
    pub fn window_for_scale(&self, s: u32) -> usize {
        2 * self.wavelength(s) + 1
    }

    /// Boundary margin `2^(m_min + 1)` pixels excluded from interior measurements.
    pub fn interior_margin(&self) -> usize {
        1usize << (self.m_min + 1)
    }

    fn check_side(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n != self.side() {
            return Err(Error::InvalidFrame(format!(
                "side {n} does not match 2^m_max = {}",
                self.side()
            )));
        }
        Ok(())
    }

    /// Upper radial cutoff of band `(s, j)`.
    fn upper_cutoff(&self, s: u32, j: u32) -> f64 {
        let k = self.k_sub as f64;
        2.0 * PI / 2f64.powi((self.m_max - s) as i32) * 2f64.powf(-((self.k_sub - j) as f64) / k)
    }
}

/// Label of a frame band: subscale `j in 1..=k_sub`, dyadic scale `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandId {
    pub j: u32,
    pub s: u32,
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Position within the transition ending at `cutoff`, which spans `1/k` octave.
#[inline]
fn transition_pos(r: f64, cutoff: f64, k: f64) -> f64 {
    (r / cutoff).log2() * k + 1.0
}

#[inline]
fn falling(r: f64, cutoff: f64, k: f64) -> f64 {
    (FRAC_PI_2 * smoothstep(transition_pos(r, cutoff, k))).cos()
}

#[inline]
fn rising(r: f64, cutoff: f64, k: f64) -> f64 {
    (FRAC_PI_2 * smoothstep(transition_pos(r, cutoff, k))).sin()
}

/// One radial window sampled on the frequency grid.
#[derive(Clone, Debug)]
pub struct BandWindow {
    pub id: BandId,
    pub gains: Vec<f64>,
}

/// All windows of a frame for one side length.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub spec: FrameSpec,
    /// Band windows ordered finest first.
    pub bands: Vec<BandWindow>,
    pub approx: Vec<f64>,
    /// Overcomplete low-pass windows, finest dyadic first (empty unless requested).
    pub extras: Vec<(u32, Vec<f64>)>,
}

impl FilterBank {
    pub fn side(&self) -> usize {
        self.spec.side()
    }

    /// Sum of squared band and approximation windows at each grid point.
    pub fn partition_sum(&self) -> Vec<f64> {
        let mut sum: Vec<f64> = self.approx.iter().map(|a| a * a).collect();
        for b in &self.bands {
            for (s, g) in sum.iter_mut().zip(&b.gains) {
                *s += g * g;
            }
        }
        sum
    }
}

/// Radial windows for `spec` on an `n x n` grid.
pub fn design_filters(spec: &FrameSpec, n: usize) -> Result<FilterBank> {
    spec.check_side(n)?;
    let grid = frequency_grid(n)?;
    let k = spec.k_sub as f64;

    // Cutoffs from the finest band downward; band i falls at cutoffs[i] and rises at cutoffs[i+1].
    let mut ids = Vec::new();
    let mut cutoffs = Vec::new();
    for s in (spec.m_min..=spec.m_max).rev() {
        for j in (1..=spec.k_sub).rev() {
            ids.push(BandId { j, s });
            cutoffs.push(spec.upper_cutoff(s, j));
        }
    }
    let lowest = cutoffs[cutoffs.len() - 1] * 2f64.powf(-1.0 / k);
    cutoffs.push(lowest);

    let radius: Vec<f64> = (0..n * n)
        .map(|i| {
            let (u, v) = grid.at(i / n, i % n);
            (u * u + v * v).sqrt()
        })
        .collect();

    let bands = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let gains = radius
                .iter()
                .map(|&r| {
                    let upper = if i == 0 { 1.0 } else { falling(r, cutoffs[i], k) };
                    upper * rising(r, cutoffs[i + 1], k)
                })
                .collect();
            BandWindow { id, gains }
        })
        .collect();
    let approx = radius.iter().map(|&r| falling(r, lowest, k)).collect();
    let extras = spec
        .extra_scales()
        .into_iter()
        .map(|s| {
            let c = spec.upper_cutoff(s, spec.k_sub);
            (s, radius.iter().map(|&r| falling(r, c, k)).collect())
        })
        .collect();
    Ok(FilterBank {
        spec: *spec,
        bands,
        approx,
        extras,
    })
}

/// A frame decomposition.
#[derive(Clone, Debug)]
pub struct ScaleStack {
    pub spec: FrameSpec,
    /// `d_{j,s}` ordered finest first.
    pub bands: Vec<(BandId, RealImage)>,
    pub approx: RealImage,
    /// Cumulative low-pass images per dyadic scale (analysis only).
    pub extras: Vec<(u32, RealImage)>,
}

impl ScaleStack {
    pub fn energy(&self) -> f64 {
        self.bands.iter().map(|(_, b)| b.energy()).sum::<f64>() + self.approx.energy()
    }
}

fn filtered_images(spec: &ComplexImage, windows: &[&[f64]]) -> Result<Vec<RealImage>> {
    let n = spec.side();
    let filtered: Vec<ComplexImage> = windows
        .iter()
        .map(|g| TransferMap::from_real(n, g.to_vec()).apply(spec))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(filtered.len());
    for pair in filtered.chunks(2) {
        if let [a, b] = pair {
            let (ra, rb) = spectral::inverse_real_pair(a, b);
            out.push(ra);
            out.push(rb);
        } else {
            out.push(spectral::inverse_real(&pair[0]));
        }
    }
    Ok(out)
}

pub fn decompose(f: &RealImage, spec: &FrameSpec) -> Result<ScaleStack> {
    let n = f.require_square()?;
    let bank = design_filters(spec, n)?;
    decompose_with(f, &bank)
}

/// Decomposition with a precomputed filter bank.
pub fn decompose_with(f: &RealImage, bank: &FilterBank) -> Result<ScaleStack> {
    let n = f.require_square()?;
    if n != bank.side() {
        return Err(Error::ShapeMismatch {
            expected: (bank.side(), bank.side()),
            actual: f.shape(),
        });
    }
    let spectrum = forward_fft(f)?;
    let mut windows: Vec<&[f64]> = bank.bands.iter().map(|b| b.gains.as_slice()).collect();
    windows.push(&bank.approx);
    windows.extend(bank.extras.iter().map(|(_, g)| g.as_slice()));
    let mut images = filtered_images(&spectrum, &windows)?.into_iter();

    let bands = bank
        .bands
        .iter()
        .map(|b| (b.id, images.next().expect("band image")))
        .collect();
    let approx = images.next().expect("approx image");
    let extras = bank
        .extras
        .iter()
        .map(|(s, _)| (*s, images.next().expect("extra image")))
        .collect();
    Ok(ScaleStack {
        spec: bank.spec,
        bands,
        approx,
        extras,
    })
}

/// Adjoint synthesis; overcomplete extras are ignored.
pub fn reconstruct(stack: &ScaleStack) -> Result<RealImage> {
    let n = stack.approx.require_square()?;
    reconstruct_with(stack, &design_filters(&stack.spec, n)?)
}

/// Adjoint synthesis with a precomputed filter bank.
pub fn reconstruct_with(stack: &ScaleStack, bank: &FilterBank) -> Result<RealImage> {
    let n = stack.approx.require_square()?;
    if bank.spec != stack.spec || bank.side() != n {
        return Err(Error::InvalidFrame("filter bank does not match the stack".into()));
    }
    if stack.bands.len() != bank.bands.len() {
        return Err(Error::InvalidFrame(format!(
            "stack has {} bands, frame expects {}",
            stack.bands.len(),
            bank.bands.len()
        )));
    }
    let mut parts: Vec<(&RealImage, &[f64])> = vec![(&stack.approx, bank.approx.as_slice())];
    for ((id, img), win) in stack.bands.iter().zip(&bank.bands) {
        if *id != win.id {
            return Err(Error::InvalidFrame(format!("band {id:?} out of order")));
        }
        stack.approx.check_same_shape(img)?;
        parts.push((img, win.gains.as_slice()));
    }
    // Bands travel in pairs as a + ib. The windows are even, so the real part of
    // the inverse of g_a Z is a's term and the imaginary part of g_b Z is b's.
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let mut re = vec![zero; n * n];
    let mut im = vec![zero; n * n];
    for pair in parts.chunks(2) {
        match pair {
            [(a, ga), (b, gb)] => {
                let z = spectral::forward_fft_packed(a, b)?;
                for (i, &zi) in z.as_slice().iter().enumerate() {
                    re[i] += zi * ga[i];
                    im[i] += zi * gb[i];
                }
            }
            [(a, ga)] => {
                let z = forward_fft(a)?;
                for (i, &zi) in z.as_slice().iter().enumerate() {
                    re[i] += zi * ga[i];
                }
            }
            _ => unreachable!(),
        }
    }
    let total = re
        .iter()
        .zip(&im)
        .map(|(r, m)| r - num_complex::Complex64::i() * m)
        .collect();
    Ok(spectral::inverse_real(&ComplexImage::new(n, n, total)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn spec(m_min: u32, m_max: u32, k_sub: u32) -> FrameSpec {
        FrameSpec {
            m_min,
            m_max,
            k_sub,
            overcomplete: false,
        }
    }

    fn white(n: usize, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn max_partition_error(bank: &FilterBank) -> f64 {
        bank.partition_sum()
            .iter()
            .fold(0.0, |m, s| m.max((s - 1.0).abs()))
    }

    #[test]
    fn single_scale_is_a_complementary_pair() {
        let bank = design_filters(&spec(6, 6, 1), 64).unwrap();
        assert_eq!(bank.bands.len(), 1);
        assert!(max_partition_error(&bank) <= 1e-10);
    }

    #[test]
    fn two_subscales_over_six_octaves() {
        let bank = design_filters(&spec(3, 8, 2), 256).unwrap();
        assert_eq!(bank.bands.len(), 12);
        // Direct summation over every grid point.
        let mut worst = 0.0f64;
        for i in 0..256 * 256 {
            let mut s = bank.approx[i] * bank.approx[i];
            for b in &bank.bands {
                s += b.gains[i] * b.gains[i];
            }
            worst = worst.max((s - 1.0).abs());
        }
        assert!(worst <= 1e-10);
    }

    #[test]
    fn partition_holds_for_all_layouts() {
        for m_max in 2..=7 {
            for m_min in 1..=m_max {
                for k in 1..=4 {
                    let bank = design_filters(&spec(m_min, m_max, k), 1 << m_max).unwrap();
                    assert!(max_partition_error(&bank) <= 1e-10, "{m_min} {m_max} {k}");
                }
            }
        }
    }

    #[test]
    fn dc_belongs_to_the_approximation() {
        let bank = design_filters(&spec(3, 8, 2), 256).unwrap();
        assert_eq!(bank.approx[0], 1.0);
        assert!(bank.bands.iter().all(|b| b.gains[0] == 0.0));
    }

    #[test]
    fn windows_are_radially_symmetric() {
        let n = 64;
        let bank = design_filters(&spec(2, 6, 3), n).unwrap();
        for b in &bank.bands {
            for r in 0..n {
                for c in 0..n {
                    assert_eq!(b.gains[r * n + c], b.gains[c * n + r]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(design_filters(&spec(5, 4, 1), 16).is_err());
        assert!(design_filters(&spec(0, 4, 1), 16).is_err());
        assert!(design_filters(&spec(2, 4, 0), 16).is_err());
        assert!(design_filters(&spec(2, 4, 1), 32).is_err());
    }

    #[test]
    fn band_centered_wave_stays_in_its_band() {
        let n = 256;
        let fs = spec(3, 8, 2);
        // Band (j=1, s=5) peaks at pi/8 = 16 cycles per image.
        let f = RealImage::from_fn(n, |_, c| (2.0 * PI * 16.0 * c as f64 / n as f64).cos());
        let stack = decompose(&f, &fs).unwrap();
        let total = stack.energy();
        let (_, band) = stack
            .bands
            .iter()
            .find(|(id, _)| *id == BandId { j: 1, s: 5 })
            .unwrap();
        assert!(band.energy() >= 0.9 * total);
    }

    #[test]
    fn zero_image_gives_zero_stack() {
        let stack = decompose(&RealImage::zeros(64), &spec(3, 6, 2)).unwrap();
        assert_eq!(stack.energy(), 0.0);
        assert_eq!(reconstruct(&stack).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn noise_energy_is_preserved_and_reconstructed() {
        let f = white(256, 11);
        let stack = decompose(&f, &spec(3, 8, 2)).unwrap();
        assert!((stack.energy() - f.energy()).abs() <= 1e-10 * f.energy());
        let back = reconstruct(&stack).unwrap();
        assert!(back.relative_l2(&f) <= 1e-10);
    }

    #[test]
    fn single_band_synthesis_applies_squared_window() {
        let n = 64;
        let fs = spec(3, 6, 2);
        let f = white(n, 2);
        let mut stack = decompose(&f, &fs).unwrap();
        let keep = 2;
        for (i, (_, b)) in stack.bands.iter_mut().enumerate() {
            if i != keep {
                *b = RealImage::zeros(n);
            }
        }
        stack.approx = RealImage::zeros(n);
        let out = forward_fft(&reconstruct(&stack).unwrap()).unwrap();
        let bank = design_filters(&fs, n).unwrap();
        let spec_f = forward_fft(&f).unwrap();
        for i in 0..n * n {
            let g = bank.bands[keep].gains[i];
            let expect = spec_f.as_slice()[i] * (g * g);
            assert!((out.as_slice()[i] - expect).norm() <= 1e-9);
        }
    }

    #[test]
    fn overcomplete_extras_are_cumulative_lowpasses() {
        let fs = spec(3, 6, 2).with_overcomplete(true);
        let bank = design_filters(&fs, 64).unwrap();
        assert_eq!(bank.extras.iter().map(|e| e.0).collect::<Vec<_>>(), vec![5, 4, 3]);
        let f = white(64, 4);
        let stack = decompose(&f, &fs).unwrap();
        assert_eq!(stack.extras.len(), 3);
        assert!(reconstruct(&stack).unwrap().relative_l2(&f) <= 1e-10);
    }
}
