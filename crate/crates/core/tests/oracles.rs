use std::f64::consts::FRAC_PI_2;

use smvphase::clifford::PlaneComplex;
use smvphase::experiments::{bench_chirp, bench_demod, row_mean, ChirpConfig, DemodConfig};
use smvphase::smv::smv_transform;
use smvphase::util::grid_coord;
use smvphase::RealImage;

/// `A cos(k1.x) + B cos(k2.x)` and its component forms: each wave at angle
/// `phi` contributes `e^{i phi} sin`, `e^{2 i phi} cos`, `e^{3 i phi} sin` to
/// the three planes.
#[test]
fn smv_components_match_two_wave_closed_forms() {
    let n = 128;
    for (k1, k2, a, b) in [((20i64, 7i64), (9i64, -22i64), 1.0, 0.6), ((0, 24), (24, 3), 2.0, 0.5), ((17, 17), (18, -15), 0.5, 2.0)] {
        let ang = |k: (i64, i64)| (k.1 as f64).atan2(k.0 as f64);
        let (t1, t2) = (ang(k1), ang(k2));
        let ph = |r: usize, c: usize, k: (i64, i64)| k.0 as f64 * grid_coord(c, n) + k.1 as f64 * grid_coord(r, n);
        let f = RealImage::from_fn(n, |r, c| a * ph(r, c, k1).cos() + b * ph(r, c, k2).cos());
        let m = smv_transform(&f).unwrap();
        let e = |k: f64, t: f64| PlaneComplex::from_angle(k * t);
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let (p, q) = (ph(r, c, k1), ph(r, c, k2));
                let odd1 = e(1.0, t1).scale(a * p.sin()) + e(1.0, t2).scale(b * q.sin());
                let even2 = e(2.0, t1).scale(a * p.cos()) + e(2.0, t2).scale(b * q.cos());
                let odd3 = e(3.0, t1).scale(a * p.sin()) + e(3.0, t2).scale(b * q.sin());
                let (g1, g2, g3) = m.planes(r * n + c);
                for (x, y) in [(g1, odd1), (g2, even2), (g3, odd3)] {
                    worst = worst.max((x - y).norm());
                }
                assert!((m.m3.get(r, c) - f.get(r, c)).abs() < 1e-12);
            }
        }
        assert!(worst <= 1e-6, "component error {worst:e}");
    }
}

/// Power-of-a-perpendicular identities the closed form relies on.
#[test]
fn perpendicular_wave_powers() {
    for (theta, eps) in [(0.3f64, 0.2f64), (1.1, -0.4), (-0.7, 0.05)] {
        let n = PlaneComplex::from_angle(theta);
        let np = PlaneComplex::from_angle(theta + eps - FRAC_PI_2);
        let i2 = PlaneComplex::new(0.0, 1.0);
        let ee = |k: f64| PlaneComplex::from_angle(k * eps);
        let minus_i = PlaneComplex::new(0.0, -1.0);
        assert!((np - minus_i * ee(1.0) * n).norm() < 1e-12);
        assert!((np * np + ee(2.0) * n * n).norm() < 1e-12);
        assert!((np * np * np - i2 * ee(3.0) * n * n * n).norm() < 1e-12);
    }
}

#[test]
fn chirp_overcomplete_noiseless_sanity() {
    let mut cfg = ChirpConfig::new(256).unwrap();
    cfg.sigmas = vec![0.0];
    cfg.trials = 1;
    let rows = bench_chirp(&cfg).unwrap();
    let s = row_mean(&rows, 0.0, "overcomplete", "product", "ssim").unwrap();
    assert!(s >= 0.9, "overcomplete product SSIM {s}");
}

#[test]
fn demod_product_beats_amplitude_at_high_noise() {
    let mut cfg = DemodConfig::new(256).unwrap();
    cfg.sigmas = vec![1.0];
    let rows = bench_demod(&cfg).unwrap();
    let p = row_mean(&rows, 1.0, "overcomplete", "product", "correlation").unwrap();
    let a = row_mean(&rows, 1.0, "overcomplete", "amplitude", "correlation").unwrap();
    assert!(p >= a, "product {p} amplitude {a}");
}

#[test]
fn demod_rejects_out_of_band_message() {
    use smvphase::synthlab::{pm_signal, sinusoidal_message};
    // Message at 20 cycles exceeds half of a 32-cycle carrier.
    let m = sinusoidal_message(64, 0.5, 20.0);
    assert!(matches!(pm_signal(64, 32.0, 0.0, 0.0, &m, 0.0, 0), Err(smvphase::Error::BandLimit { .. })));
}
