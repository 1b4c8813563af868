//! Minimal Cl(3) arithmetic.
//!
//! The SMV pipeline itself works in the `{1, e12}` plane through
//! [`PlaneComplex`]; the full [`Multivector`] exists so blade routing can be
//! checked against hand-derived products.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Basis blades in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Blade {
    Scalar = 0,
    E1 = 1,
    E2 = 2,
    E3 = 3,
    E23 = 4,
    E31 = 5,
    E12 = 6,
    E123 = 7,
}

impl Blade {
    pub const ALL: [Blade; 8] = [
        Blade::Scalar,
        Blade::E1,
        Blade::E2,
        Blade::E3,
        Blade::E23,
        Blade::E31,
        Blade::E12,
        Blade::E123,
    ];
}

// Each stored blade as (bitmask over e1,e2,e3; sign relative to the ascending product).
// e31 = e3 e1 = -e1 e3.
const BASIS: [(u8, i8); 8] = [
    (0b000, 1),
    (0b001, 1),
    (0b010, 1),
    (0b100, 1),
    (0b110, 1),
    (0b101, -1),
    (0b011, 1),
    (0b111, 1),
];

const fn reorder_sign(a: u8, b: u8) -> i8 {
    // Swaps needed to bring the generators of a*b into ascending order.
    let mut swaps = 0u32;
    let mut x = a >> 1;
    while x != 0 {
        swaps += (x & b).count_ones();
        x >>= 1;
    }
    if swaps.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

const fn index_of_mask(mask: u8) -> usize {
    let mut i = 0;
    while i < 8 {
        if BASIS[i].0 == mask {
            return i;
        }
        i += 1;
    }
    panic!("mask outside Cl(3)");
}

const fn build_table() -> [[(u8, i8); 8]; 8] {
    let mut table = [[(0u8, 0i8); 8]; 8];
    let mut i = 0;
    while i < 8 {
        let mut j = 0;
        while j < 8 {
            let (ma, sa) = BASIS[i];
            let (mb, sb) = BASIS[j];
            let mask = ma ^ mb;
            let k = index_of_mask(mask);
            let sign = sa * sb * reorder_sign(ma, mb) * BASIS[k].1;
            table[i][j] = (k as u8, sign);
            j += 1;
        }
        i += 1;
    }
    table
}

/// `PRODUCT[i][j] = (k, sign)` with `blade_i * blade_j = sign * blade_k`.
pub const PRODUCT: [[(u8, i8); 8]; 8] = build_table();

/// A Cl(3) element with coefficients on `{1, e1, e2, e3, e23, e31, e12, e123}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Multivector(pub [f64; 8]);

impl Multivector {
    pub fn zero() -> Self {
        Self([0.0; 8])
    }

    pub fn blade(b: Blade) -> Self {
        Self::scaled_blade(b, 1.0)
    }

    pub fn scaled_blade(b: Blade, c: f64) -> Self {
        let mut m = [0.0; 8];
        m[b as usize] = c;
        Self(m)
    }

    pub fn scalar(c: f64) -> Self {
        Self::scaled_blade(Blade::Scalar, c)
    }

    pub fn coeff(&self, b: Blade) -> f64 {
        self.0[b as usize]
    }

    pub fn geometric_product(&self, other: &Self) -> Self {
        geometric_product(self, other)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn geometric_product(a: &Multivector, b: &Multivector) -> Multivector {
    let mut out = [0.0; 8];
    for (i, &ai) in a.0.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.0.iter().enumerate() {
            let (k, s) = PRODUCT[i][j];
            out[k as usize] += s as f64 * ai * bj;
        }
    }
    Multivector(out)
}

impl Add for Multivector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Self(out)
    }
}

impl Mul for Multivector {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        geometric_product(&self, &rhs)
    }
}

/// `re + im * I2` with `I2 = e12`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlaneComplex {
    pub re: f64,
    pub im: f64,
}

impl PlaneComplex {
    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `exp(angle * I2)`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { re: c, im: s }
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }

    /// Argument in `(-pi, pi]`.
    pub fn arg(self) -> Result<f64> {
        if self.re == 0.0 && self.im == 0.0 {
            return Err(Error::UndefinedArgument);
        }
        Ok(principal_arg(self.im.atan2(self.re)))
    }

    /// Argument without the zero check; `atan2(0, 0) = 0`.
    #[inline]
    pub fn arg_unchecked(self) -> f64 {
        principal_arg(self.im.atan2(self.re))
    }

    pub fn to_multivector(self) -> Multivector {
        let mut m = [0.0; 8];
        m[Blade::Scalar as usize] = self.re;
        m[Blade::E12 as usize] = self.im;
        Multivector(m)
    }
}

// atan2 returns -pi for (-1, -0.0); fold it onto +pi.
#[inline]
fn principal_arg(a: f64) -> f64 {
    if a <= -PI {
        PI
    } else {
        a
    }
}

pub fn arg(z: PlaneComplex) -> Result<f64> {
    z.arg()
}

impl Add for PlaneComplex {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for PlaneComplex {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Neg for PlaneComplex {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl Mul for PlaneComplex {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}
