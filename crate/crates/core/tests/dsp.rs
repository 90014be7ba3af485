mod common;

use common::{brute_xcorr, conformance, sample_variance, tone_amplitude};
use cppg_core::dsp::{
    band_limited_noise, design_bandpass, kurtosis, shannon_entropy, welch_psd, welch_with_window, xcorr_normalized,
    FilterFamily, PPG_BAND, PULSE_BAND,
};
use cppg_core::Series;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FS: f64 = 400.0;

fn gaussian(n: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); sd * z }).collect::<Vec<f64>>()
}

#[test]
fn xcorr_matches_double_loop_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(16..160);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let max_lag = rng.random_range(0..n / 2);
        let cc = xcorr_normalized(&t, &s, max_lag).unwrap();
        assert_eq!(cc.values.len(), 2 * max_lag + 1);
        for &(d, r) in &cc.values {
            let oracle = brute_xcorr(&t, &s, d).unwrap();
            worst = worst.max((r - oracle).abs());
        }
        let (best_lag, best_r) = cc.values.iter().fold((0, f64::NEG_INFINITY), |b, &(d, r)| if r > b.1 { (d, r) } else { b });
        assert_eq!(cc.best_r, best_r);
        assert_eq!(cc.best_lag, best_lag);
    }
    assert!(worst <= 1e-9, "worst deviation {worst:e}");
}

#[test]
fn xcorr_recovers_forty_sample_delay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = gaussian(1040, 1.0, &mut rng);
    let t = base[40..].to_vec();
    let s = base[..1000].to_vec();
    // s[i + 40] = base[i] ... so t[i] = base[i + 40] = s[i + 40].
    let cc = xcorr_normalized(&t, &s, 100).unwrap();
    assert_eq!(cc.best_lag, 40);
    assert!((cc.best_r - 1.0).abs() < 1e-12);
}

#[test]
fn constant_overlap_lags_are_skipped() {
    let t = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let s = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let cc = xcorr_normalized(&t, &s, 3).unwrap();
    assert!(cc.values.iter().all(|&(d, _)| d >= 0), "{:?}", cc.values);
    for &(d, r) in &cc.values {
        assert!((r - brute_xcorr(&t, &s, d).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn front_end_and_pulse_filters_conform() {
    for (family, band) in [(FilterFamily::Bessel, PPG_BAND), (FilterFamily::Butterworth, PULSE_BAND)] {
        let f = design_bandpass(family, 4, band.0, band.1, FS).unwrap();
        assert!(f.is_stable());
        let h = f.impulse_response(1 << 16);
        assert!(h[h.len() - 1000..].iter().all(|v| v.abs() < 1e-12), "{family:?} impulse response has not decayed");
        let c = conformance(&h, band.0, band.1, FS);
        assert!(c.passes(), "{family:?}: {c:?}");
    }
}

#[test]
fn five_hertz_tone_passes_front_end() {
    let f = design_bandpass(FilterFamily::Bessel, 4, 0.5, 25.0, FS).unwrap();
    let x: Vec<f64> = (0..8000).map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / FS).sin()).collect();
    let y = f.filter(&x);
    // Last 10 s, an integer number of periods, well past the transient.
    let a = tone_amplitude(&y[4000..], 5.0, FS);
    assert!((0.7..=1.05).contains(&a), "amplitude ratio {a}");
}

#[test]
fn slow_drift_is_attenuated() {
    let f = design_bandpass(FilterFamily::Bessel, 4, 0.5, 25.0, FS).unwrap();
    // 0.05 Hz over 120 s: 6 periods; measure over the last 100 s (5 periods).
    let x: Vec<f64> = (0..48000).map(|i| (2.0 * std::f64::consts::PI * 0.05 * i as f64 / FS).sin()).collect();
    let y = f.filter(&x);
    let a = tone_amplitude(&y[8000..], 0.05, FS);
    assert!(20.0 * a.log10() <= -20.0, "drift gain {:.1} dB", 20.0 * a.log10());
}

#[test]
fn welch_parseval_on_stationary_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..100 {
        let sd = rng.random_range(0.1..20.0);
        let mut x = gaussian(2000, sd, &mut rng);
        if k % 2 == 1 {
            // Coloured but stationary: a first-order moving average.
            x = x.windows(2).map(|w| w[0] + 0.6 * w[1]).collect();
            x.push(0.0);
        }
        let psd = welch_with_window(&x, FS, 200).unwrap();
        let ratio = psd.total_power() / sample_variance(&x);
        assert!((ratio - 1.0).abs() <= 0.1, "series {k}: ratio {ratio}");
    }
}

#[test]
fn welch_tone_peak_sits_at_two_hertz() {
    let x: Vec<f64> = (0..2000).map(|i| (2.0 * std::f64::consts::PI * 2.0 * i as f64 / FS).sin()).collect();
    let psd = welch_psd(&Series::new(x, FS).unwrap(), 0.1).unwrap();
    assert_eq!(psd.window_len, 200);
    assert_eq!(psd.overlap, 100);
    let peak = psd.power.iter().enumerate().fold(0, |b, (i, &p)| if p > psd.power[b] { i } else { b });
    assert!((psd.freqs[peak] - 2.0).abs() < 1e-12);
}

#[test]
fn band_limited_noise_follows_filter_shape() {
    let f = design_bandpass(FilterFamily::Bessel, 4, 0.5, 25.0, FS).unwrap();
    let mut avg = vec![0.0; 101];
    for seed in 0..20 {
        let s = band_limited_noise(50.0, PPG_BAND, FS, 2000, seed).unwrap();
        assert_eq!(s, band_limited_noise(50.0, PPG_BAND, FS, 2000, seed).unwrap());
        let psd = welch_psd(&s, 0.1).unwrap();
        for (a, p) in avg.iter_mut().zip(&psd.power) {
            *a += p / 20.0;
        }
        let peak = psd.power.iter().cloned().fold(0.0, f64::max);
        // A 4th-order Bessel edge is gentle: the PSD drops under 1% of its
        // peak only past about 2.5 times the upper cutoff.
        for (fr, p) in psd.freqs.iter().zip(&psd.power) {
            if *fr >= 64.0 {
                assert!(*p < 0.01 * peak, "seed {seed}: {fr} Hz holds {:.4} of peak", p / peak);
            }
        }
    }
    // White noise through the filter: the averaged PSD tracks |H|^2 of the
    // design (ratio of 50 Hz to 8 Hz bins).
    let h2 = |fr: f64| f.response(fr).norm_sqr();
    let measured = avg[25] / avg[4];
    let expected = h2(50.0) / h2(8.0);
    assert!((measured / expected - 1.0).abs() < 0.35, "measured {measured}, expected {expected}");
    assert!(band_limited_noise(0.0, PPG_BAND, FS, 2000, 0).is_err());
}

#[test]
fn entropy_and_kurtosis_reference_values() {
    assert_eq!(shannon_entropy(&[4.0; 100], 16), 0.0);
    let uniform: Vec<f64> = (0..1600).map(|i| (i / 100) as f64 + 0.5).collect();
    assert!((shannon_entropy(&uniform, 16) - 1.0).abs() < 1e-12);
    let two: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
    assert!((shannon_entropy(&two, 16) - 0.25).abs() < 1e-12);

    let sine: Vec<f64> = (0..100_000).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 1000.0).sin()).collect();
    assert!((kurtosis(&sine).unwrap() - 1.5).abs() < 1e-9);
    assert!((kurtosis(&two).unwrap() - 1.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!((kurtosis(&gaussian(100_000, 1.0, &mut rng)).unwrap() - 3.0).abs() < 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filters_are_linear_time_invariant(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let f = design_bandpass(FilterFamily::Bessel, 4, 0.5, 25.0, FS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(600, 1.0, &mut rng);
        let y = gaussian(600, 1.0, &mut rng);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (f.filter(&x), f.filter(&y), f.filter(&mix));
        for i in 0..600 {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
        }
        // Shift invariance of the impulse response path: delaying a zero-start
        // input delays the output.
        let mut delayed = vec![0.0; 50];
        let mut xz = x.clone();
        xz[0] = 0.0;
        delayed.extend_from_slice(&xz);
        let (fz, fd) = (f.filter(&xz), f.filter(&delayed));
        for i in 0..600 {
            prop_assert!((fd[i + 50] - fz[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_ignores_sample_order(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(500, 1.0, &mut rng);
        let mut rev = x.clone();
        rev.reverse();
        let mut rotated = x.clone();
        rotated.rotate_left(137);
        let e = shannon_entropy(&x, 16);
        prop_assert_eq!(e, shannon_entropy(&rev, 16));
        prop_assert_eq!(e, shannon_entropy(&rotated, 16));
    }

    #[test]
    fn kurtosis_is_affine_invariant(seed in 0u64..1000, scale in 0.01f64..100.0, shift in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(500, 1.0, &mut rng);
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let (kx, ky) = (kurtosis(&x).unwrap(), kurtosis(&y).unwrap());
        prop_assert!((kx - ky).abs() < 1e-8 * kx);
    }
}
