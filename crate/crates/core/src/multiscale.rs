//! Per-scale features, quality maps and per-pixel scale selection.
//!
//! A feature stack holds one entry per frame band (finest first) followed by
//! the overcomplete low-pass bands when the frame enables them. Every entry
//! exposes the same derived channels regardless of backend: amplitude, phase
//! signed along a direction in `[0, pi)`, and the orientation used for the
//! variance quality.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monogenic::{self, IapMono};
use crate::smv::{self, IapFeatures, SmvKernels};
use crate::spectral::{self, forward_fft, RealImage, TransferMap};
use crate::steerable::{design_filters, BandId, FilterBank, FrameSpec};
use crate::util::box_sums;

/// Band amplitudes at or below this fraction of the input RMS carry no
/// usable orientation and are flagged undefined.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

/// Which local model produces the per-scale features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Monogenic signal (Riesz pair) per band.
    Ms,
    /// Structure multivector per band.
    Smv,
}

/// Local quality function used for scale selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityKind {
    Amplitude,
    Ovar,
    Product,
}

impl QualityKind {
    pub const ALL: [QualityKind; 3] = [QualityKind::Amplitude, QualityKind::Ovar, QualityKind::Product];

    pub fn name(self) -> &'static str {
        match self {
            QualityKind::Amplitude => "amplitude",
            QualityKind::Ovar => "ovar",
            QualityKind::Product => "product",
        }
    }
}

/// Origin of a feature scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleId {
    Band(BandId),
    /// Overcomplete low-pass at dyadic scale `s`.
    LowPass(u32),
}

impl ScaleId {
    pub fn dyadic(self) -> u32 {
        match self {
            ScaleId::Band(b) => b.s,
            ScaleId::LowPass(s) => s,
        }
    }
}

/// Raw backend output for one scale.
#[derive(Clone, Debug)]
pub enum FeatureSet {
    Smv(IapFeatures),
    Mono(IapMono),
}

/// Features of one band image.
#[derive(Clone, Debug)]
pub struct PerScaleFeatures {
    pub id: ScaleId,
    pub raw: FeatureSet,
    pub amplitude: RealImage,
    /// Phase signed along `direction`.
    pub phase: RealImage,
    /// Direction in `[0, pi)` along which `phase` increases.
    pub direction: RealImage,
    /// Zero for the monogenic backend.
    pub minor_amp: RealImage,
    pub minor_phase: RealImage,
    /// Angle fed to the variance quality; period given by `orientation_period`.
    pub orientation: RealImage,
    pub orientation_period: f64,
    pub undefined: Vec<bool>,
}

impl PerScaleFeatures {
    pub fn from_smv(id: ScaleId, f: IapFeatures) -> Self {
        let n = f.major_amp.side();
        let direction = f.major_direction();
        Self {
            id,
            amplitude: f.major_amp.clone(),
            phase: f.major_phase.clone(),
            direction,
            minor_amp: f.minor_amp.clone(),
            minor_phase: f.minor_phase.clone(),
            orientation: f.theta_e.theta_e.clone(),
            orientation_period: PI / 2.0,
            undefined: f.theta_e.undefined.clone(),
            raw: FeatureSet::Smv(f),
        }
        .checked(n)
    }

    pub fn from_mono(id: ScaleId, f: IapMono) -> Self {
        let n = f.amplitude.side();
        let (direction, phase) = f.signed();
        Self {
            id,
            amplitude: f.amplitude.clone(),
            phase,
            orientation: direction.clone(),
            direction,
            minor_amp: RealImage::zeros(n),
            minor_phase: RealImage::zeros(n),
            orientation_period: PI,
            undefined: f.low_amplitude_mask.clone(),
            raw: FeatureSet::Mono(f),
        }
        .checked(n)
    }

    fn checked(self, n: usize) -> Self {
        debug_assert_eq!(self.phase.side(), n);
        self
    }

    pub fn side(&self) -> usize {
        self.amplitude.side()
    }
}

/// One non-negative quality map per feature scale.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityStack {
    pub maps: Vec<RealImage>,
}

impl QualityStack {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Applies `f` to every value; strictly increasing `f` preserves selection.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self {
            maps: self.maps.iter().map(|m| m.map(f)).collect(),
        }
    }
}

/// Multiscale features gathered at each pixel's selected scale.
#[derive(Clone, Debug)]
pub struct MultiscaleFeatures {
    /// Index into the feature stack.
    pub k_map: Vec<usize>,
    pub amplitude: RealImage,
    pub phase: RealImage,
    pub direction: RealImage,
    pub minor_amp: RealImage,
    pub minor_phase: RealImage,
    /// Winning quality value.
    pub quality: RealImage,
}

impl MultiscaleFeatures {
    pub fn side(&self) -> usize {
        self.amplitude.side()
    }

    /// Phase re-signed so that its direction points within `pi/2` of `reference`.
    pub fn aligned_phase(&self, reference: &RealImage) -> Result<RealImage> {
        align_phase(&self.phase, &self.direction, reference)
    }
}

/// Flips `phase` where `direction` points away from `reference`.
pub fn align_phase(phase: &RealImage, direction: &RealImage, reference: &RealImage) -> Result<RealImage> {
    phase.check_same_shape(direction)?;
    phase.check_same_shape(reference)?;
    let n = phase.side();
    let out = phase
        .as_slice()
        .iter()
        .zip(direction.as_slice())
        .zip(reference.as_slice())
        .map(|((&p, &d), &r)| if (d - r).cos() < 0.0 { -p } else { p })
        .collect();
    Ok(RealImage::from_vec_unchecked(n, out))
}

/// Frame filters plus the backend kernels, reusable across images.
#[derive(Clone, Debug)]
pub struct Analyzer {
    bank: FilterBank,
    backend: Backend,
    smv: Option<SmvKernels>,
    riesz: Option<(TransferMap, TransferMap)>,
}

impl Analyzer {
    pub fn new(spec: &FrameSpec, backend: Backend) -> Result<Self> {
        let n = spec.side();
        let bank = design_filters(spec, n)?;
        let (smv, riesz) = match backend {
            Backend::Smv => (Some(SmvKernels::new(n)?), None),
            Backend::Ms => (
                None,
                Some((
                    TransferMap::sample(n, &monogenic::riesz_gain(0))?,
                    TransferMap::sample(n, &monogenic::riesz_gain(1))?,
                )),
            ),
        };
        Ok(Self {
            bank,
            backend,
            smv,
            riesz,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.bank.spec
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn scale_ids(&self) -> Vec<ScaleId> {
        self.bank
            .bands
            .iter()
            .map(|b| ScaleId::Band(b.id))
            .chain(self.bank.extras.iter().map(|(s, _)| ScaleId::LowPass(*s)))
            .collect()
    }

    /// Per-scale features of `f`, finest band first, extras last.
    pub fn per_scale(&self, f: &RealImage) -> Result<Vec<PerScaleFeatures>> {
        let n = f.require_square()?;
        if n != self.bank.side() {
            return Err(Error::ShapeMismatch {
                expected: (self.bank.side(), self.bank.side()),
                actual: f.shape(),
            });
        }
        let spectrum = forward_fft(f)?;
        let floor = AMPLITUDE_FLOOR * (f.energy() / (n * n) as f64).sqrt();
        let windows: Vec<(ScaleId, &[f64])> = self
            .bank
            .bands
            .iter()
            .map(|b| (ScaleId::Band(b.id), b.gains.as_slice()))
            .chain(
                self.bank
                    .extras
                    .iter()
                    .map(|(s, g)| (ScaleId::LowPass(*s), g.as_slice())),
            )
            .collect();
        windows
            .par_iter()
            .map(|(id, gains)| {
                let band = TransferMap::from_real(n, gains.to_vec()).apply(&spectrum)?;
                let m3 = spectral::inverse_real(&band);
                let mut features = match self.backend {
                    Backend::Smv => {
                        let kernels = self.smv.as_ref().expect("smv kernels");
                        let field = kernels.transform(&band, m3)?;
                        PerScaleFeatures::from_smv(*id, smv::features(&field))
                    }
                    Backend::Ms => {
                        let (g1, g2) = self.riesz.as_ref().expect("riesz kernels");
                        let (r1, r2) =
                            spectral::inverse_real_pair(&g1.apply(&band)?, &g2.apply(&band)?);
                        PerScaleFeatures::from_mono(*id, monogenic::features_from_parts(&m3, &r1, &r2))
                    }
                };
                for (u, &a) in features.undefined.iter_mut().zip(features.amplitude.as_slice()) {
                    *u |= a <= floor;
                }
                Ok(features)
            })
            .collect()
    }

    /// Per-scale features, quality maps and selection in one call.
    pub fn analyze(&self, f: &RealImage, kind: QualityKind) -> Result<(MultiscaleFeatures, QualityStack)> {
        let stack = self.per_scale(f)?;
        let q = quality(&stack, kind, self.spec())?;
        Ok((select(&stack, &q)?, q))
    }
}

fn require_nonempty(stack: &[PerScaleFeatures]) -> Result<usize> {
    let first = stack.first().ok_or(Error::EmptyStack)?;
    let n = first.side();
    for s in stack {
        if s.side() != n {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                actual: (s.side(), s.side()),
            });
        }
    }
    Ok(n)
}

/// Major amplitude of each scale.
pub fn amplitude_quality(stack: &[PerScaleFeatures]) -> Result<QualityStack> {
    require_nonempty(stack)?;
    Ok(QualityStack {
        maps: stack.iter().map(|s| s.amplitude.clone()).collect(),
    })
}

/// `1 / (1 + V)` with `V = 1 - |windowed mean of exp(i 2 pi theta / period)|`,
/// skipping `undefined` pixels; windows are clipped at the borders.
pub fn orientation_variance(theta: &RealImage, undefined: &[bool], period: f64, window: usize) -> RealImage {
    let n = theta.side();
    let w = if window.is_multiple_of(2) { window + 1 } else { window };
    let half = w / 2;
    let k = 2.0 * PI / period;
    let mut cs = Vec::with_capacity(n * n);
    let mut sn = Vec::with_capacity(n * n);
    let mut wt = Vec::with_capacity(n * n);
    for (&t, &u) in theta.as_slice().iter().zip(undefined) {
        if u {
            cs.push(0.0);
            sn.push(0.0);
            wt.push(0.0);
        } else {
            let (s, c) = (k * t).sin_cos();
            cs.push(c);
            sn.push(s);
            wt.push(1.0);
        }
    }
    let (c, s, cnt) = (box_sums(n, &cs, half), box_sums(n, &sn, half), box_sums(n, &wt, half));
    let q = (0..n * n)
        .map(|i| {
            // Counts are integers; anything below one half is an empty window.
            let r = if cnt[i] < 0.5 {
                0.0
            } else {
                (c[i].hypot(s[i]) / cnt[i]).min(1.0)
            };
            1.0 / (2.0 - r)
        })
        .collect();
    RealImage::from_vec_unchecked(n, q)
}

/// Default variance window of each scale, from its dyadic scale.
pub fn default_windows(stack: &[PerScaleFeatures], spec: &FrameSpec) -> Vec<usize> {
    stack.iter().map(|s| spec.window_for_scale(s.id.dyadic())).collect()
}

pub fn orientation_variance_quality(stack: &[PerScaleFeatures], windows: &[usize]) -> Result<QualityStack> {
    require_nonempty(stack)?;
    if windows.len() != stack.len() {
        return Err(Error::InvalidParameter(format!(
            "{} windows for {} scales",
            windows.len(),
            stack.len()
        )));
    }
    let maps = stack
        .par_iter()
        .zip(windows)
        .map(|(s, &w)| orientation_variance(&s.orientation, &s.undefined, s.orientation_period, w))
        .collect();
    Ok(QualityStack { maps })
}

pub fn product_quality(amp: &QualityStack, ovar: &QualityStack) -> Result<QualityStack> {
    if amp.len() != ovar.len() {
        return Err(Error::InvalidParameter(format!(
            "quality stacks of {} and {} scales",
            amp.len(),
            ovar.len()
        )));
    }
    let maps = amp
        .maps
        .iter()
        .zip(&ovar.maps)
        .map(|(a, o)| a.zip_map(o, |x, y| x * y))
        .collect::<Result<_>>()?;
    Ok(QualityStack { maps })
}

/// Quality stack of the requested kind with the frame's default windows.
pub fn quality(stack: &[PerScaleFeatures], kind: QualityKind, spec: &FrameSpec) -> Result<QualityStack> {
    match kind {
        QualityKind::Amplitude => amplitude_quality(stack),
        QualityKind::Ovar => orientation_variance_quality(stack, &default_windows(stack, spec)),
        QualityKind::Product => product_quality(
            &amplitude_quality(stack)?,
            &orientation_variance_quality(stack, &default_windows(stack, spec))?,
        ),
    }
}

/// Per-pixel argmax of `q` (first maximum wins, i.e. the finest scale) and
/// the gathered features.
pub fn select(stack: &[PerScaleFeatures], q: &QualityStack) -> Result<MultiscaleFeatures> {
    let n = require_nonempty(stack)?;
    if q.len() != stack.len() {
        return Err(Error::InvalidParameter(format!(
            "{} quality maps for {} scales",
            q.len(),
            stack.len()
        )));
    }
    for m in &q.maps {
        if m.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                actual: m.shape(),
            });
        }
    }
    let len = n * n;
    let mut k_map = Vec::with_capacity(len);
    let mut best_q = Vec::with_capacity(len);
    for i in 0..len {
        let mut best = 0usize;
        let mut bv = q.maps[0].as_slice()[i];
        for (k, m) in q.maps.iter().enumerate().skip(1) {
            let v = m.as_slice()[i];
            if v > bv {
                best = k;
                bv = v;
            }
        }
        k_map.push(best);
        best_q.push(bv);
    }
    let gather = |pick: fn(&PerScaleFeatures) -> &RealImage| {
        let data = k_map
            .iter()
            .enumerate()
            .map(|(i, &k)| pick(&stack[k]).as_slice()[i])
            .collect();
        RealImage::from_vec_unchecked(n, data)
    };
    Ok(MultiscaleFeatures {
        amplitude: gather(|s| &s.amplitude),
        phase: gather(|s| &s.phase),
        direction: gather(|s| &s.direction),
        minor_amp: gather(|s| &s.minor_amp),
        minor_phase: gather(|s| &s.minor_phase),
        quality: RealImage::from_vec_unchecked(n, best_q),
        k_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{gaussian_noise, plane_wave};
    use crate::util::{interior_mask, wrap_to_period};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack_for(f: &RealImage, backend: Backend) -> (FrameSpec, Vec<PerScaleFeatures>) {
        let spec = FrameSpec::for_side(f.side()).unwrap();
        let a = Analyzer::new(&spec, backend).unwrap();
        (spec, a.per_scale(f).unwrap())
    }

    #[test]
    fn single_scale_and_zero_image() {
        let f = gaussian_noise(64, 1.0, 1);
        let (_, stack) = stack_for(&f, Backend::Smv);
        let one = &stack[2..3];
        let q = amplitude_quality(one).unwrap();
        assert_eq!(q.maps[0], one[0].amplitude);
        let sel = select(one, &q).unwrap();
        assert!(sel.k_map.iter().all(|&k| k == 0));
        assert_eq!(sel.phase, one[0].phase);

        let (_, z) = stack_for(&RealImage::zeros(64), Backend::Smv);
        let q = amplitude_quality(&z).unwrap();
        assert!(q.maps.iter().all(|m| m.max_abs() == 0.0));
        assert!(matches!(select(&[], &QualityStack { maps: vec![] }), Err(Error::EmptyStack)));
    }

    #[test]
    fn wave_selects_its_band() {
        let n = 128;
        let spec = FrameSpec {
            m_min: 5,
            m_max: 7,
            k_sub: 1,
            overcomplete: false,
        };
        // Band (1, 6) peaks at pi/2 rad/sample: 32 cycles per image.
        let f = RealImage::from_fn(n, |r, c| (2.0 * PI * 32.0 * (c as f64 + 0.5 * r as f64) / n as f64).cos());
        let a = Analyzer::new(&spec, Backend::Smv).unwrap();
        let stack = a.per_scale(&f).unwrap();
        let target = stack
            .iter()
            .position(|s| s.id == ScaleId::Band(BandId { j: 1, s: 6 }))
            .unwrap();
        let coarse = stack
            .iter()
            .position(|s| s.id == ScaleId::Band(BandId { j: 1, s: 5 }))
            .unwrap();
        let two = vec![stack[coarse].clone(), stack[target].clone()];
        let sel = select(&two, &amplitude_quality(&two).unwrap()).unwrap();
        let mask = interior_mask(n, spec.interior_margin());
        let inside = mask.iter().filter(|&&m| m).count();
        let hits = sel.k_map.iter().zip(&mask).filter(|(&k, &m)| m && k == 1).count();
        assert!(hits as f64 >= 0.95 * inside as f64);
    }

    #[test]
    fn constant_orientation_has_unit_quality() {
        let theta = RealImage::filled(32, 0.3);
        let q = orientation_variance(&theta, &vec![false; 1024], PI / 2.0, 9);
        assert!(q.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn random_orientations_have_low_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = RealImage::from_fn(128, |_, _| rng.random_range(0.0..PI / 2.0));
        let q = orientation_variance(&theta, &vec![false; 128 * 128], PI / 2.0, 15);
        assert!(q.mean() <= 0.6);
    }

    #[test]
    fn orientation_offset_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let theta = RealImage::from_fn(64, |r, c| 0.02 * (r + c) as f64 + rng.random_range(0.0..0.3));
        let undefined: Vec<bool> = (0..64 * 64).map(|i| i % 37 == 0).collect();
        let q0 = orientation_variance(&theta, &undefined, PI / 2.0, 11);
        let shifted = theta.map(|t| wrap_to_period(t + 1.234, PI / 2.0));
        let q1 = orientation_variance(&shifted, &undefined, PI / 2.0, 11);
        for (a, b) in q0.as_slice().iter().zip(q1.as_slice()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn coherent_scale_beats_noise_scale() {
        let n = 256;
        let g = plane_wave(n, 16.0, PI / 4.0, 1.0, 11).unwrap();
        let (spec, stack) = stack_for(&g.image, Backend::Smv);
        let q = quality(&stack, QualityKind::Ovar, &spec).unwrap();
        let clean = Analyzer::new(&spec, Backend::Smv).unwrap().per_scale(&g.clean).unwrap();
        let coherent = (0..clean.len())
            .max_by(|&a, &b| clean[a].amplitude.energy().total_cmp(&clean[b].amplitude.energy()))
            .unwrap();
        let finest = 0usize;
        let mask = interior_mask(n, spec.interior_margin());
        let mut wins = 0usize;
        let mut total = 0usize;
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            total += 1;
            if q.maps[coherent].as_slice()[i] > q.maps[finest].as_slice()[i] {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.8 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn product_with_unit_ovar_is_amplitude() {
        let f = gaussian_noise(64, 1.0, 2);
        let (_, stack) = stack_for(&f, Backend::Ms);
        let a = amplitude_quality(&stack).unwrap();
        let ones = QualityStack {
            maps: a.maps.iter().map(|_| RealImage::filled(64, 1.0)).collect(),
        };
        assert_eq!(product_quality(&a, &ones).unwrap(), a);
        let zeros = ones.map(|_| 0.0);
        let p = product_quality(&zeros, &orientation_variance_quality(&stack, &vec![5; stack.len()]).unwrap()).unwrap();
        assert!(p.maps.iter().all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn selection_matches_brute_force_and_is_monotone_invariant() {
        let f = gaussian_noise(64, 1.0, 3);
        let (spec, stack) = stack_for(&f, Backend::Smv);
        let q = quality(&stack, QualityKind::Product, &spec).unwrap();
        let sel = select(&stack, &q).unwrap();
        for i in 0..64 * 64 {
            let k = sel.k_map[i];
            assert_eq!(sel.phase.as_slice()[i], stack[k].phase.as_slice()[i]);
            assert_eq!(sel.amplitude.as_slice()[i], stack[k].amplitude.as_slice()[i]);
            for m in &q.maps {
                assert!(q.maps[k].as_slice()[i] >= m.as_slice()[i]);
            }
        }
        let warped = q.map(|v| (3.0 * v).exp() + v.powi(3));
        assert_eq!(select(&stack, &warped).unwrap().k_map, sel.k_map);
    }

    #[test]
    fn ties_go_to_finest_scale() {
        let f = gaussian_noise(64, 1.0, 4);
        let (_, stack) = stack_for(&f, Backend::Ms);
        let q = QualityStack {
            maps: stack.iter().map(|_| RealImage::filled(64, 0.5)).collect(),
        };
        assert!(select(&stack, &q).unwrap().k_map.iter().all(|&k| k == 0));
    }

    #[test]
    fn overcomplete_stack_layout() {
        let spec = FrameSpec::for_side(64).unwrap().with_overcomplete(true);
        let a = Analyzer::new(&spec, Backend::Smv).unwrap();
        let ids = a.scale_ids();
        assert_eq!(ids.len(), spec.band_count() + spec.extra_scales().len());
        assert_eq!(ids.last(), Some(&ScaleId::LowPass(spec.m_min)));
        let stack = a.per_scale(&gaussian_noise(64, 1.0, 5)).unwrap();
        assert_eq!(stack.len(), ids.len());
    }

    #[test]
    fn backends_agree_on_a_clean_wave() {
        let n = 256;
        let g = plane_wave(n, 16.0 * 2f64.sqrt(), PI / 4.0, 0.0, 0).unwrap();
        let spec = FrameSpec::for_side(n).unwrap();
        let truth = g.orientation.clone();
        for backend in [Backend::Ms, Backend::Smv] {
            let a = Analyzer::new(&spec, backend).unwrap();
            let (sel, _) = a.analyze(&g.image, QualityKind::Amplitude).unwrap();
            let ph = sel.aligned_phase(&truth).unwrap();
            let m = spec.interior_margin();
            let mut worst = 0.0f64;
            for r in m..n - m {
                for c in m..n - m {
                    let e = crate::util::wrap_to_pi(ph.get(r, c) - g.phase.get(r, c));
                    worst = worst.max(e.abs());
                }
            }
            assert!(worst < 1e-8, "{backend:?}: {worst}");
        }
    }
}
