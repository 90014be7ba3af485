//! Reference implementations written independently of the library, used as
//! oracles by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Normalized cross-correlation evaluated literally: min-max rescale, then for lag `d` a double loop
/// over the overlap for the means and a second pass for the sums.
pub fn brute_xcorr(t: &[f64], s: &[f64], d: i64) -> Option<f64> {
    let rescale = |x: &[f64]| {
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        x.iter().map(|v| (v - lo) / (hi - lo)).collect::<Vec<_>>()
    };
    let (t, s) = (rescale(t), rescale(s));
    let n = t.len() as i64;
    let mut pairs = Vec::new();
    for i in 0..n {
        let j = i + d;
        if j >= 0 && j < n {
            pairs.push((t[i as usize], s[j as usize]));
        }
    }
    let m = pairs.len() as f64;
    let mt = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let ms = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let mut num = 0.0;
    let mut et = 0.0;
    let mut es = 0.0;
    for &(a, b) in &pairs {
        num += (a - mt) * (b - ms);
        et += (a - mt) * (a - mt);
        es += (b - ms) * (b - ms);
    }
    if et <= 1e-12 * m || es <= 1e-12 * m {
        return None;
    }
    Some(num / (et * es).sqrt())
}

/// Magnitude of the DTFT of `h` at `f_hz`, by direct summation.
pub fn dtft_magnitude(h: &[f64], f_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f_hz / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in h.iter().enumerate() {
        re += v * (w * k as f64).cos();
        im -= v * (w * k as f64).sin();
    }
    (re * re + im * im).sqrt()
}

pub fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// Amplitude of the `f_hz` component of `x` by projection onto a sine/cosine
/// pair. Exact when `x` spans an integer number of periods.
pub fn tone_amplitude(x: &[f64], f_hz: f64, fs: f64) -> f64 {
    let n = x.len() as f64;
    let w = 2.0 * PI * f_hz / fs;
    let (mut c, mut s) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        c += v * (w * k as f64).cos();
        s += v * (w * k as f64).sin();
    }
    2.0 * (c * c + s * s).sqrt() / n
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Band-edge and stopband measurements of an impulse response.
#[derive(Debug, Clone, Copy)]
pub struct Conformance {
    pub lo_db: f64,
    pub hi_db: f64,
    pub peak_db: f64,
    pub low_stop_db: f64,
    pub high_stop_db: f64,
}

/// Gains measured from the impulse response, in dB relative to the
/// passband peak. The stopband probes sit a decade below `lo` and a factor
/// of four above `hi` (capped below Nyquist).
pub fn conformance(h: &[f64], lo: f64, hi: f64, fs: f64) -> Conformance {
    let grid: Vec<f64> = (0..=400).map(|i| lo * (hi / lo).powf(i as f64 / 400.0)).collect();
    let peak = grid.iter().map(|&f| dtft_magnitude(h, f, fs)).fold(0.0, f64::max);
    let rel = |f: f64| db(dtft_magnitude(h, f, fs) / peak);
    Conformance {
        lo_db: rel(lo),
        hi_db: rel(hi),
        peak_db: db(peak),
        low_stop_db: rel(lo / 10.0),
        high_stop_db: rel((4.0 * hi).min(0.45 * fs)),
    }
}

impl Conformance {
    pub fn passes(&self) -> bool {
        (self.lo_db + 3.0).abs() < 0.5
            && (self.hi_db + 3.0).abs() < 0.5
            && self.peak_db.abs() < 0.5
            && self.low_stop_db <= -20.0
            && self.high_stop_db <= -20.0
    }
}

pub mod gate;

/// Welch PSD by the textbook recipe: periodic Hann window, 50% overlap,
/// per-segment mean removal, direct DFT, density scaling, one-sided.
pub fn naive_welch(x: &[f64], fs: f64, nper: usize) -> Vec<f64> {
    let step = nper - nper / 2;
    let w: Vec<f64> = (0..nper).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nper as f64).cos()).collect();
    let u: f64 = w.iter().map(|v| v * v).sum();
    let nfreq = nper / 2 + 1;
    let mut acc = vec![0.0; nfreq];
    let mut segs = 0;
    let mut start = 0;
    while start + nper <= x.len() {
        let seg = &x[start..start + nper];
        let m = seg.iter().sum::<f64>() / nper as f64;
        for (k, a) in acc.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in seg.iter().enumerate() {
                let ph = 2.0 * PI * (k * i) as f64 / nper as f64;
                re += (v - m) * w[i] * ph.cos();
                im -= (v - m) * w[i] * ph.sin();
            }
            *a += re * re + im * im;
        }
        segs += 1;
        start += step;
    }
    acc.iter()
        .enumerate()
        .map(|(k, a)| {
            let two = if k == 0 || (nper % 2 == 0 && k == nfreq - 1) { 1.0 } else { 2.0 };
            two * a / (fs * u * segs as f64)
        })
        .collect()
}
pub mod grad;
