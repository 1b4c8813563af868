//! Small numeric helpers shared across modules.

use std::f64::consts::PI;

use crate::spectral::RealImage;

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_to_pi(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Wraps an angle into `[0, period)`.
#[inline]
pub fn wrap_to_period(a: f64, period: f64) -> f64 {
    let w = a.rem_euclid(period);
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Summed-area table with a zero border row and column, `(n+1)^2` entries.
pub(crate) struct Integral {
    n: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub fn new(n: usize, values: &[f64]) -> Self {
        let m = n + 1;
        let mut sums = vec![0.0; m * m];
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                row += values[r * n + c];
                sums[(r + 1) * m + c + 1] = sums[r * m + c + 1] + row;
            }
        }
        Self { n, sums }
    }

    /// Sum over the half-open box `[r0, r1) x [c0, c1)`.
    #[inline]
    pub fn box_sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let m = self.n + 1;
        self.sums[r1 * m + c1] - self.sums[r0 * m + c1] - self.sums[r1 * m + c0]
            + self.sums[r0 * m + c0]
    }

    /// Sum over the `w x w` window centered at `(r, c)`, clipped to the image.
    #[inline]
    pub fn window_sum(&self, r: usize, c: usize, half: usize) -> f64 {
        let r0 = r.saturating_sub(half);
        let c0 = c.saturating_sub(half);
        let r1 = (r + half + 1).min(self.n);
        let c1 = (c + half + 1).min(self.n);
        self.box_sum(r0, r1, c0, c1)
    }
}

/// Windowed sums of each value over a clipped `(2*half+1)^2` box.
pub(crate) fn box_sums(n: usize, values: &[f64], half: usize) -> Vec<f64> {
    let table = Integral::new(n, values);
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(table.window_sum(r, c, half));
        }
    }
    out
}

/// Linear-interpolated percentile (`p` in `[0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Physical grid coordinate `-pi + 2 pi i / n` of sample index `i`.
#[inline]
pub fn grid_coord(i: usize, n: usize) -> f64 {
    -PI + 2.0 * PI * i as f64 / n as f64
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Boolean mask of the interior region, `margin` pixels from every edge.
pub fn interior_mask(n: usize, margin: usize) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    for r in margin..n.saturating_sub(margin) {
        for c in margin..n.saturating_sub(margin) {
            mask[r * n + c] = true;
        }
    }
    mask
}

pub(crate) fn masked_values(img: &RealImage, mask: &[bool]) -> Vec<f64> {
    img.as_slice()
        .iter()
        .zip(mask)
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect()
}
