mod common;

use common::gate::{pulse_train, white};
use common::{brute_xcorr, naive_welch};
use cppg_core::eval::{
    align, bland_altman, clinical_report, detect_r_peaks, detect_systolic_peaks, pp_pr, pp_pr_from_times, rmse_f,
    signal_metrics, snr_db, EvalInput, PeakSeries,
};
use cppg_core::quality::BeatShape;
use cppg_core::signal::standardize;
use cppg_core::synth::{default_cohort, synth_pair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const FS: f64 = 400.0;

fn three(x: &[f64]) -> Vec<Vec<f64>> {
    vec![x.to_vec(); 3]
}

fn shifted(x: &[f64], by: usize, fill: &[f64]) -> Vec<f64> {
    // y[i + by] = x[i]
    let mut y = fill[..by].to_vec();
    y.extend_from_slice(&x[..x.len() - by]);
    y
}

#[test]
fn align_identity_and_constructed_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = standardize(&pulse_train(70.0, 2000, 1.0, 0.0)).unwrap();
    let a = align(&three(&f), &three(&f), &three(&f), 800).unwrap();
    assert_eq!((a.applied_lag, a.len()), (0, 2000));

    let fill = white(100, 1.0, &mut rng);
    let r = shifted(&f, 100, &fill);
    let a = align(&three(&r), &three(&r), &three(&f), 800).unwrap();
    assert_eq!((a.applied_lag, a.len()), (100, 1900));
    assert_eq!(a.restored[2], f[..1900].to_vec());
    let again = align(&a.restored, &a.measured, &a.fppg, 800).unwrap();
    assert_eq!(again.applied_lag, 0);
}

#[test]
fn align_lag_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let n = 300;
        let f: Vec<Vec<f64>> = (0..3).map(|_| white(n, 1.0, &mut rng)).collect();
        let r: Vec<Vec<f64>> = (0..3).map(|c| {
            let noise = white(n, 1.5, &mut rng);
            let k = rng.random_range(0..40);
            (0..n).map(|i| if i >= k { f[c][i - k] } else { 0.0 } + noise[i]).collect()
        }).collect();
        let max_lag = 60;
        let a = align(&r, &r, &f, max_lag).unwrap();
        let best = (-(max_lag as i64)..=max_lag as i64)
            .filter_map(|d| brute_xcorr(&f[2], &r[2], d).map(|v| (d, v)))
            .fold((0, f64::NEG_INFINITY), |b, (d, v)| if v > b.1 { (d, v) } else { b });
        assert_eq!(a.applied_lag, best.0);
    }
}

#[test]
fn metrics_by_hand() {
    assert_eq!(signal_metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap().rmse, 0.0);
    let a = [1.0, 3.0, -2.0, 0.5, 4.0, -1.0, 2.0, 0.0];
    let b = [2.0, 2.5, -1.0, 0.0, 3.0, -2.0, 2.5, 1.0];
    let m = signal_metrics(&a, &b).unwrap();
    // Differences a - b: -1, 0.5, -1, 0.5, 1, 1, -0.5, -1.
    assert!((m.mae - 6.5 / 8.0).abs() < 1e-12);
    assert!((m.rmse - (5.75f64 / 8.0).sqrt()).abs() < 1e-12);
    // mean(a) = 7.5 / 8, mean(b) = 8 / 8; sums of products by hand:
    // Saa = 35.25 - 7.5^2/8, Sbb = 31.5 - 8^2/8, Sab = 30.5 - 7.5*8/8.
    let (saa, sbb, sab): (f64, f64, f64) = (35.25 - 56.25 / 8.0, 23.5, 23.0);
    assert!((m.r - sab / (saa * sbb).sqrt()).abs() < 1e-12);
    assert!((m.r2 - (1.0 - 5.75 / saa)).abs() < 1e-12);

    let z: Vec<f64> = a.iter().map(|v| v - 7.5 / 8.0).collect();
    let neg: Vec<f64> = z.iter().map(|v| -v).collect();
    assert!((signal_metrics(&z, &neg).unwrap().r + 1.0).abs() < 1e-12);
}

#[test]
fn snr_log_identities() {
    let reference: Vec<f64> = (0..1000).map(|i| (2.0 * PI * i as f64 / 100.0).sin()).collect();
    // var(reference) = 0.5 exactly over whole periods; +-s alternation has variance s^2.
    for (ratio, expect) in [(1.0, 0.0), (10.0, 10.0), (100.0, 20.0)] {
        let s = (0.5f64 / ratio).sqrt();
        let cand: Vec<f64> = reference.iter().enumerate().map(|(i, r)| r + if i % 2 == 0 { s } else { -s }).collect();
        assert!((snr_db(&cand, &reference).unwrap() - expect).abs() < 1e-9);
    }
    assert_eq!(snr_db(&reference, &reference).unwrap(), f64::INFINITY);
}

#[test]
fn spectral_rmse_against_textbook_welch() {
    let sine = |f: f64, ph: f64| (0..2000).map(|i| (2.0 * PI * f * i as f64 / FS + ph).sin()).collect::<Vec<f64>>();
    let (a, b) = (sine(1.0, 0.0), sine(3.0, 0.0));
    let (pa, pb) = (naive_welch(&a, FS, 200), naive_welch(&b, FS, 200));
    let oracle = (pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / pa.len() as f64).sqrt();
    assert!((rmse_f(&a, &b, FS).unwrap() - oracle).abs() < 1e-12 * oracle);
    assert_eq!(rmse_f(&a, &a, FS).unwrap(), 0.0);
    // Phase only moves energy between segments' real and imaginary parts.
    let peak = pa.iter().cloned().fold(0.0, f64::max);
    let phased = sine(1.0, 1.1);
    assert!(rmse_f(&a, &phased, FS).unwrap() < 0.02 * peak);
}

/// Phase of the nominal beat's maximum.
fn systolic_phase() -> f64 {
    let s = BeatShape::default();
    (0..10_000).map(|i| i as f64 / 10_000.0).fold(0.0, |b, p| if s.value(p) > s.value(b) { p } else { b })
}

#[test]
fn systolic_peaks_of_sixty_bpm_train() {
    let x = standardize(&pulse_train(60.0, 2000, 1.0, 0.0)).unwrap();
    let p = detect_systolic_peaks(&x, FS).unwrap();
    let phase = systolic_phase();
    assert_eq!(p.count(), 5);
    for (k, t) in p.times().iter().enumerate() {
        assert!((t - (k as f64 + phase)).abs() <= 0.010, "peak {k} at {t}");
    }
    assert!(detect_systolic_peaks(&[0.5; 2000], FS).is_err());
}

#[test]
fn systolic_peak_recall_under_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phase = systolic_phase();
    let period = 60.0 / 72.0;
    let (mut hit, mut total) = (0, 0);
    for _ in 0..100 {
        let clean = standardize(&pulse_train(72.0, 2000, 1.0, 0.0)).unwrap();
        // 15 dB: noise variance is 10^-1.5 of the unit signal variance.
        let noise = white(2000, 10f64.powf(-0.75), &mut rng);
        let x: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let got = detect_systolic_peaks(&x, FS).map(|p| p.times()).unwrap_or_default();
        let mut t = phase * period;
        while t < 5.0 {
            total += 1;
            hit += got.iter().any(|g| (g - t).abs() <= 0.05) as usize;
            t += period;
        }
    }
    let recall = hit as f64 / total as f64;
    assert!(recall >= 0.9, "recall {recall}");
}

#[test]
fn r_peaks_of_synthetic_ecg() {
    let mut s = default_cohort(1, 3).remove(0);
    s.base_hr = 60.0;
    s.hr_variability = 0.0;
    let rec = synth_pair(&s, 20.0, 8).unwrap();
    let ecg = &rec.ecg[4000..6000];
    let truth: Vec<f64> = rec.beat_times.iter().map(|t| t - 10.0).filter(|t| (0.0..5.0).contains(t)).collect();
    let p = detect_r_peaks(ecg, FS).unwrap();
    assert_eq!(p.count(), truth.len());
    assert_eq!(p.count(), 5);
    let (rr, _) = pp_pr(&p).unwrap();
    let (rr_truth, _) = pp_pr_from_times(&truth).unwrap();
    assert!((rr - rr_truth).abs() <= 0.005, "{rr} vs {rr_truth}");
    assert!(detect_r_peaks(&[0.05; 2000], FS).is_err());
}

#[test]
fn finger_pulse_rate_tracks_ground_truth() {
    for (i, mut s) in default_cohort(6, 12).into_iter().enumerate() {
        s.chest_noise_level = 0.0;
        let rec = synth_pair(&s, 30.0, i as u64).unwrap();
        for start in (1..9).map(|k| k * 1200) {
            let x = standardize(&rec.finger.channels[2][start..start + 2000]).unwrap();
            let t0 = start as f64 / FS;
            let peaks = detect_systolic_peaks(&x, FS).unwrap();
            // The beats that produced the detected peaks: the last onset
            // before each peak.
            let truth: Vec<f64> = peaks
                .times()
                .iter()
                .map(|p| rec.beat_times.iter().map(|t| t - t0).filter(|t| t < p).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let (_, pr) = pp_pr(&peaks).unwrap();
            let (_, pr_truth) = pp_pr_from_times(&truth).unwrap();
            assert!((pr - pr_truth).abs() <= 1.0, "{}: {pr} vs {pr_truth}", s.id);
        }
    }
}

#[test]
fn pulse_interval_arithmetic() {
    let every = PeakSeries::new(vec![0, 320, 640, 960], 1.0 / FS);
    let (pp, pr) = pp_pr(&every).unwrap();
    assert!((pp - 0.8).abs() < 1e-12 && (pr - 75.0).abs() < 1e-9);
    let (pp, pr) = pp_pr_from_times(&[0.0, 0.5, 1.1]).unwrap();
    assert!((pp - 0.55).abs() < 1e-12 && (pr - 60.0 / 0.55).abs() < 1e-9);
    assert!(pp_pr(&PeakSeries::new(vec![10], 1.0 / FS)).is_err());
}

#[test]
fn bland_altman_cases() {
    let a = [0.8, 0.9, 1.0];
    let ba = bland_altman(&a, &a).unwrap();
    assert_eq!((ba.bias, ba.lower, ba.upper), (0.0, 0.0, 0.0));
    let ba = bland_altman(&[1.1, 0.9], &[1.0, 1.0]).unwrap();
    let sd = 0.2f64.sqrt() / 10.0f64.sqrt();
    assert!(ba.bias.abs() < 1e-12 && (ba.sd - sd).abs() < 1e-12 && (ba.upper - 1.96 * sd).abs() < 1e-12);
    let ba = bland_altman(&[0.85, 0.95, 1.05], &[0.8, 0.9, 1.0]).unwrap();
    assert!((ba.bias - 0.05).abs() < 1e-12 && ba.sd < 1e-12);
}

#[test]
fn report_identities() {
    let s = &default_cohort(1, 2)[0];
    let rec = synth_pair(s, 20.0, 3).unwrap();
    let inputs: Vec<EvalInput> = (0..4)
        .map(|k| {
            let w = |ch: &Vec<f64>| ch[k * 1200..k * 1200 + 2000].to_vec();
            let f: Vec<Vec<f64>> = rec.finger.channels.iter().map(w).collect();
            let c: Vec<Vec<f64>> = rec.chest.channels.iter().map(w).collect();
            EvalInput { id: format!("c{k}"), fs: FS, fppg: f.clone(), measured: c, restored: f, ecg: None, truth_pr: None }
        })
        .collect();
    let (rep, evals, failed) = clinical_report(&inputs);
    assert!(failed.is_empty());
    for c in 0..3 {
        assert!((rep.restored[c].r - 1.0).abs() < 1e-12 && rep.restored[c].mae < 1e-12);
        assert_eq!(rep.clinical_restored[c].mae_pr, Some(0.0));
    }
    assert!(evals.iter().all(|e| e.applied_lag == 0));

    let same: Vec<EvalInput> = inputs.iter().map(|i| EvalInput { restored: i.measured.clone(), ..i.clone() }).collect();
    let (rep, _, _) = clinical_report(&same);
    assert_eq!(rep.measured, rep.restored);
    assert_eq!(rep.clinical_measured, rep.clinical_restored);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snr_ignores_noise_sign(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = white(500, 1.0, &mut rng);
        let n = white(500, 0.7, &mut rng);
        let plus: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a - b).collect();
        prop_assert!((snr_db(&plus, &r).unwrap() - snr_db(&minus, &r).unwrap()).abs() < 1e-9);
    }
}
