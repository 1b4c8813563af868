//! 2D FFT plumbing, DFT-ordered frequency grids and frequency-domain transfer
//! functions.
//!
//! Images are stored row-major. The column index is the `x` axis and maps to
//! the angular frequency `u`; the row index is the `y` axis and maps to `v`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Relative imaginary residue above which an inverse transform is rejected.
pub const CONJUGATE_SYMMETRY_TOLERANCE: f64 = 1e-8;

/// A real-valued 2D sample grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RealImage {
    /// Wraps a row-major buffer, rejecting non-finite samples.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BufferLength {
                len: data.len(),
                width,
                height,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            width: n,
            height: n,
            data: vec![value; n * n],
        }
    }

    /// Builds an `n x n` image from `f(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Self {
            width: n,
            height: n,
            data,
        }
    }

    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self {
            width: n,
            height: n,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Side length of a square image (the width).
    #[inline]
    pub fn side(&self) -> usize {
        self.width
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two images of equal shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Central sub-image with `margin` pixels removed on every side.
    pub fn crop(&self, margin: usize) -> Self {
        let w = self.width.saturating_sub(2 * margin);
        let h = self.height.saturating_sub(2 * margin);
        let mut data = Vec::with_capacity(w * h);
        for r in margin..margin + h {
            data.extend_from_slice(&self.data[r * self.width + margin..r * self.width + margin + w]);
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    pub fn require_square(&self) -> Result<usize> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.width)
    }

    /// Relative L2 distance `|self - other| / |other|` (absolute when `other` is zero).
    pub fn relative_l2(&self, other: &Self) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let base = other.energy();
        if base == 0.0 {
            diff.sqrt()
        } else {
            (diff / base).sqrt()
        }
    }
}

/// Complex 2D sample grid, row-major. Used for spectra.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BufferLength {
                len: data.len(),
                width,
                height,
            });
        }
        if let Some(i) = data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            width: n,
            height: n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Projection onto conjugate-symmetric spectra: `(X(k) + conj(X(-k))) / 2`.
    ///
    /// The inverse of the result is the real part of the inverse of `self`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.width;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            let rr = (n - r) % n;
            for c in 0..n {
                let cc = (n - c) % n;
                data[r * n + c] = (self.data[r * n + c] + self.data[rr * n + cc].conj()) * 0.5;
            }
        }
        Self {
            width: n,
            height: n,
            data,
        }
    }

    fn require_square(&self) -> Result<usize> {
        if self.width != self.height {
            return Err(Error::NonSquare {
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.width)
    }
}

/// DFT-ordered angular frequencies (radians per sample) along one axis.
///
/// The 2D grid point at `(row, col)` is `(u, v) = (axis[col], axis[row])`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    axis: Vec<f64>,
}

impl FrequencyGrid {
    pub fn side(&self) -> usize {
        self.axis.len()
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// `(u, v)` at a grid point.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        (self.axis[col], self.axis[row])
    }
}

pub fn frequency_grid(n: usize) -> Result<FrequencyGrid> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let axis = (0..n)
        .map(|k| {
            let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * k / n as f64
        })
        .collect();
    Ok(FrequencyGrid { axis })
}

/// A frequency-domain gain `h(u, v)`.
///
/// The DC bin always receives [`Transfer::dc_gain`], never `gain(0, 0)`, so
/// transfer functions with a removable singularity at the origin are well defined.
pub trait Transfer {
    fn gain(&self, u: f64, v: f64) -> Complex64;
    fn dc_gain(&self) -> Complex64;
}

/// Closure-backed transfer function with an explicit DC value.
pub struct Gain<F> {
    f: F,
    dc: Complex64,
}

impl<F> Gain<F>
where
    F: Fn(f64, f64) -> Complex64,
{
    pub fn new(f: F, dc: Complex64) -> Self {
        Self { f, dc }
    }
}

impl<F> Transfer for Gain<F>
where
    F: Fn(f64, f64) -> Complex64,
{
    fn gain(&self, u: f64, v: f64) -> Complex64 {
        (self.f)(u, v)
    }

    fn dc_gain(&self) -> Complex64 {
        self.dc
    }
}

/// A transfer function sampled on the grid of one side length.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMap {
    n: usize,
    gains: Vec<Complex64>,
}

impl TransferMap {
    pub fn sample<T: Transfer + ?Sized>(n: usize, h: &T) -> Result<Self> {
        let grid = frequency_grid(n)?;
        let mut gains = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (u, v) = grid.at(r, c);
                gains.push(if r == 0 && c == 0 { h.dc_gain() } else { h.gain(u, v) });
            }
        }
        Ok(Self { n, gains })
    }

    /// Real-valued gains (radial windows).
    pub fn from_real(n: usize, gains: Vec<f64>) -> Self {
        assert_eq!(gains.len(), n * n);
        Self {
            n,
            gains: gains.into_iter().map(|g| Complex64::new(g, 0.0)).collect(),
        }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn apply(&self, spec: &ComplexImage) -> Result<ComplexImage> {
        if spec.width != self.n || spec.height != self.n {
            return Err(Error::ShapeMismatch {
                expected: (self.n, self.n),
                actual: (spec.width, spec.height),
            });
        }
        Ok(ComplexImage {
            width: self.n,
            height: self.n,
            data: spec.data.iter().zip(&self.gains).map(|(a, g)| a * g).collect(),
        })
    }
}

/// Pointwise product of a spectrum with `h` sampled on its frequency grid.
pub fn apply_transfer<T: Transfer + ?Sized>(spec: &ComplexImage, h: &T) -> Result<ComplexImage> {
    let n = spec.require_square()?;
    TransferMap::sample(n, h)?.apply(spec)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// In-place unnormalized 2D transform of a square row-major buffer.
fn fft_2d_inplace(n: usize, buf: &mut [Complex64], direction: FftDirection) {
    let fft = plan(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(n, buf);
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(n, buf);
}

fn transpose_square<T>(n: usize, buf: &mut [T]) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Unnormalized 2D DFT of a square real image.
pub fn forward_fft(img: &RealImage) -> Result<ComplexImage> {
    let n = img.require_square()?;
    let mut data: Vec<Complex64> = img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d_inplace(n, &mut data, FftDirection::Forward);
    Ok(ComplexImage {
        width: n,
        height: n,
        data,
    })
}

/// `forward_fft(a) + i forward_fft(b)` with one complex transform.
pub(crate) fn forward_fft_packed(a: &RealImage, b: &RealImage) -> Result<ComplexImage> {
    let n = a.require_square()?;
    a.check_same_shape(b)?;
    let mut data: Vec<Complex64> = a.data.iter().zip(&b.data).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft_2d_inplace(n, &mut data, FftDirection::Forward);
    Ok(ComplexImage {
        width: n,
        height: n,
        data,
    })
}

fn inverse_complex(spec: &ComplexImage) -> Vec<Complex64> {
    let n = spec.width;
    let mut data = spec.data.clone();
    fft_2d_inplace(n, &mut data, FftDirection::Inverse);
    let norm = 1.0 / (n * n) as f64;
    for z in &mut data {
        *z *= norm;
    }
    data
}

/// Real part of the normalized inverse 2D DFT.
///
/// Fails when the imaginary residue exceeds
/// [`CONJUGATE_SYMMETRY_TOLERANCE`] times the largest output magnitude.
pub fn inverse_fft(spec: &ComplexImage) -> Result<RealImage> {
    let n = spec.require_square()?;
    let data = inverse_complex(spec);
    let (residue, magnitude) = data
        .iter()
        .fold((0.0f64, 0.0f64), |(r, m), z| (r.max(z.im.abs()), m.max(z.norm())));
    if residue > CONJUGATE_SYMMETRY_TOLERANCE * magnitude {
        return Err(Error::ConjugateSymmetry { residue, magnitude });
    }
    Ok(RealImage::from_vec_unchecked(
        n,
        data.into_iter().map(|z| z.re).collect(),
    ))
}

/// Inverse transform of the Hermitian part of `spec`: always real.
pub fn inverse_real(spec: &ComplexImage) -> RealImage {
    let n = spec.width;
    let data = inverse_complex(spec);
    RealImage::from_vec_unchecked(n, data.into_iter().map(|z| z.re).collect())
}

/// Two real inverse transforms for the price of one complex transform.
///
/// Both inputs are projected onto their Hermitian parts first, so the result is
/// `(inverse_real(a), inverse_real(b))`.
pub fn inverse_real_pair(a: &ComplexImage, b: &ComplexImage) -> (RealImage, RealImage) {
    let n = a.width;
    debug_assert_eq!(b.width, n);
    let a = a.hermitian_part();
    let b = b.hermitian_part();
    let packed = ComplexImage {
        width: n,
        height: n,
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| x + Complex64::i() * y)
            .collect(),
    };
    let data = inverse_complex(&packed);
    let re = data.iter().map(|z| z.re).collect();
    let im = data.iter().map(|z| z.im).collect();
    (
        RealImage::from_vec_unchecked(n, re),
        RealImage::from_vec_unchecked(n, im),
    )
}

/// Filters a real image: `inverse_real(apply_transfer(forward_fft(img), h))`.
pub fn filter<T: Transfer + ?Sized>(img: &RealImage, h: &T) -> Result<RealImage> {
    let spec = forward_fft(img)?;
    Ok(inverse_real(&apply_transfer(&spec, h)?))
}
