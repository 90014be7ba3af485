//! Filter design and application, Welch spectra, normalized cross-correlation
//! and the histogram/moment statistics used by the quality gate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::signal::Series;

/// Pass band used for every PPG signal.
pub const PPG_BAND: (f64, f64) = (0.5, 25.0);
/// Pass band of the aggressive filter used before pulse-rate extraction.
pub const PULSE_BAND: (f64, f64) = (0.5, 2.5);
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFamily {
    Bessel,
    Butterworth,
}

/// One second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// A designed digital IIR band-pass filter.
///
/// `order` is the order of the analog low-pass prototype; the band-pass
/// transform doubles it, so `numerator`/`denominator` have `2 * order + 1`
/// coefficients. Filtering runs through the cascaded `sections`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub family: FilterFamily,
    pub order: usize,
    pub band: (f64, f64),
    pub fs: f64,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub sections: Vec<Biquad>,
    pub poles: Vec<Complex64>,
}

impl FilterSpec {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.fs;
        let z_inv = Complex64::new(math::cos(w), -math::sin(w));
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain_db(&self, f_hz: f64) -> f64 {
        20.0 * math::log10(self.response(f_hz).norm())
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.norm() < 1.0)
    }

    /// Causal single-pass filtering of raw samples.
    ///
    /// The internal state starts at the steady state for a constant input equal
    /// to the first sample, so a DC offset does not ring through the high-pass
    /// edge. The map stays linear in the input.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.to_vec();
        let Some(&x0) = x.first() else { return y };
        let mut level = x0;
        for s in &self.sections {
            let out_level = s.dc_gain() * level;
            let mut z2 = s.b[2] * level - s.a[2] * out_level;
            let mut z1 = s.b[1] * level - s.a[1] * out_level + z2;
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[1] * out + z2;
                z2 = s.b[2] * xin - s.a[2] * out;
                *v = out;
            }
            level = out_level;
        }
        y
    }

    /// Impulse response of length `n` from a zero initial state.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n];
        if n == 0 {
            return y;
        }
        y[0] = 1.0;
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[1] * out + z2;
                z2 = s.b[2] * xin - s.a[2] * out;
                *v = out;
            }
        }
        y
    }
}

/// Designs a digital band-pass filter via an analog prototype, the
/// low-pass to band-pass transform and the pre-warped bilinear transform.
///
/// Bessel prototypes are normalized so the magnitude is -3 dB at the
/// prototype cutoff, which puts the -3 dB points at `lo_hz` and `hi_hz`.
pub fn design_bandpass(family: FilterFamily, order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<FilterSpec> {
    if !(fs > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
    }
    if hi_hz >= fs / 2.0 {
        return Err(Error::Nyquist { hi: hi_hz, nyquist: fs / 2.0 });
    }
    if !(lo_hz > 0.0) || !(lo_hz < hi_hz) {
        return Err(Error::InvalidArgument(format!("need 0 < lo < hi, got ({lo_hz}, {hi_hz})")));
    }
    if order == 0 || order > 12 {
        return Err(Error::InvalidArgument(format!("prototype order must be in 1..=12, got {order}")));
    }

    let proto = match family {
        FilterFamily::Butterworth => butterworth_poles(order),
        FilterFamily::Bessel => bessel_poles(order)?,
    };
    let proto_gain = proto.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * -p).re;

    let fs2 = 2.0 * fs;
    let wl = fs2 * math::tan(PI * lo_hz / fs);
    let wh = fs2 * math::tan(PI * hi_hz / fs);
    let bw = wh - wl;
    let w0 = math::sqrt(wl * wh);

    // Low-pass to band-pass: each prototype pole splits into two, n zeros at s = 0.
    let mut analog_poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let half = p * (bw / 2.0);
        let disc = (half * half - w0 * w0).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }
    let analog_gain = proto_gain * math::powi(bw, order as i32);

    // Bilinear transform.
    let poles: Vec<Complex64> = analog_poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let num = Complex64::new(math::powi(fs2, order as i32), 0.0);
    let den = analog_poles.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let gain = analog_gain * (num / den).re;

    let sections = pair_sections(&poles, gain)?;
    let mut numerator = vec![1.0];
    let mut denominator = vec![1.0];
    for s in &sections {
        numerator = poly_mul(&numerator, &s.b);
        denominator = poly_mul(&denominator, &s.a);
    }
    let spec = FilterSpec {
        family,
        order,
        band: (lo_hz, hi_hz),
        fs,
        numerator,
        denominator,
        sections,
        poles,
    };
    if !spec.is_stable() {
        return Err(Error::Design("designed filter has poles on or outside the unit circle".into()));
    }
    Ok(spec)
}

/// Groups poles into conjugate pairs; every section gets one zero at +1 and one at -1.
fn pair_sections(poles: &[Complex64], gain: f64) -> Result<Vec<Biquad>> {
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| math::abs(p.im) <= 1e-12).map(|p| p.re).collect();
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.total_cmp(b));
    if real.len() % 2 != 0 {
        return Err(Error::Design("odd number of real poles".into()));
    }
    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|p| Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -2.0 * p.re, p.norm_sqr()] })
        .collect();
    for pair in real.chunks(2) {
        sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]] });
    }
    if sections.is_empty() {
        return Err(Error::Design("no poles".into()));
    }
    for c in sections[0].b.iter_mut() {
        *c *= gain;
    }
    Ok(sections)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn butterworth_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::new(math::cos(theta), math::sin(theta))
        })
        .collect()
}

/// Poles of the Bessel prototype normalized to -3 dB at 1 rad/s.
fn bessel_poles(n: usize) -> Result<Vec<Complex64>> {
    // Reverse Bessel polynomial, coefficients in ascending powers.
    let coeffs: Vec<f64> = (0..=n)
        .map(|k| {
            let mut v = 1.0;
            // (2n-k)! / (2^(n-k) k! (n-k)!)
            for i in 1..=(2 * n - k) {
                v *= i as f64;
            }
            for i in 1..=k {
                v /= i as f64;
            }
            for i in 1..=(n - k) {
                v /= i as f64;
            }
            v / math::powi(2.0, (n - k) as i32)
        })
        .collect();
    let roots = polynomial_roots(&coeffs)?;
    let a0 = coeffs[0];
    let mag2 = |w: f64| {
        let s = Complex64::new(0.0, w);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            acc = acc * s + c;
        }
        (a0 / acc.norm()) * (a0 / acc.norm())
    };
    let (mut lo, mut hi) = (1e-3, 1e3);
    for _ in 0..200 {
        let mid = math::sqrt(lo * hi);
        if mag2(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let wc = math::sqrt(lo * hi);
    Ok(roots.into_iter().map(|r| r / wc).collect())
}

/// Roots of a monic-normalizable polynomial (ascending coefficients) by
/// Durand-Kerner iteration.
fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let c: Vec<f64> = coeffs.iter().map(|x| x / lead).collect();
    let eval = |z: Complex64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in c.iter().rev() {
            acc = acc * z + k;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite() || eval(*r).norm() > 1e-6 * c[0].abs().max(1.0)) {
        return Err(Error::Design("prototype root finding did not converge".into()));
    }
    // Snap nearly-real roots onto the real axis so conjugate pairing is exact.
    Ok(roots
        .into_iter()
        .map(|r| if math::abs(r.im) < 1e-10 { Complex64::new(r.re, 0.0) } else { r })
        .collect())
}

/// Filters a series with a designed filter.
pub fn apply_filter(f: &FilterSpec, s: &Series) -> Result<Series> {
    if s.fs() != f.fs {
        return Err(Error::FsMismatch { expected: f.fs, found: s.fs() });
    }
    Series::new(f.filter(s.samples()), s.fs())
}

/// Min-max rescaling to [0, 1]; `None` for a constant input.
pub fn rescale_unit(xs: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = min_max(xs);
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    Some(xs.iter().map(|x| (x - lo) / range).collect())
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Indices of local maxima at or above `threshold`, at least `min_distance`
/// samples apart. Taller peaks win when two are too close.
pub fn find_peaks(y: &[f64], min_distance: usize, threshold: f64) -> Vec<usize> {
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }
    let mut cands: Vec<usize> = (1..n - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] >= threshold)
        .collect();
    cands.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_distance) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// Normalized cross-correlation over a range of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    /// `(lag, r)` for every lag whose overlap has non-zero variance on both sides.
    pub values: Vec<(i64, f64)>,
    pub best_lag: i64,
    pub best_r: f64,
}

/// Normalized correlation of `t[i]` against `s[i + d]` for `|d| <= max_lag`.
///
/// A positive lag means `s` is delayed with respect to `t`. Both inputs are
/// rescaled to [0, 1] first; means and energies are taken over the
/// overlapping segment of each lag. Lags whose overlap is constant are
/// skipped.
pub fn xcorr_normalized(t: &[f64], s: &[f64], max_lag: usize) -> Result<CrossCorrelation> {
    let n = t.len();
    if s.len() != n {
        return Err(Error::Shape(format!("cross-correlation inputs differ in length ({n} vs {})", s.len())));
    }
    if n < 2 {
        return Err(Error::EmptyInput("cross-correlation needs at least 2 samples".into()));
    }
    let max_lag = max_lag.min(n - 2);
    let t = rescale_unit(t).ok_or_else(|| Error::UndefinedCorrelation("template is constant".into()))?;
    let s = rescale_unit(s).ok_or_else(|| Error::UndefinedCorrelation("signal is constant".into()))?;
    let prefix = |x: &[f64], sq: bool| {
        let mut p = Vec::with_capacity(x.len() + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for v in x {
            acc += if sq { v * v } else { *v };
            p.push(acc);
        }
        p
    };
    let (pt, ptt, ps, pss) = (prefix(&t, false), prefix(&t, true), prefix(&s, false), prefix(&s, true));

    let mut values = Vec::with_capacity(2 * max_lag + 1);
    for d in -(max_lag as i64)..=(max_lag as i64) {
        // i runs over [t0, t1) and pairs with s[i + d].
        let (t0, t1) = if d >= 0 { (0, n - d as usize) } else { ((-d) as usize, n) };
        let (s0, s1) = ((t0 as i64 + d) as usize, (t1 as i64 + d) as usize);
        let m = (t1 - t0) as f64;
        let st = pt[t1] - pt[t0];
        let ss = ps[s1] - ps[s0];
        let vt = (ptt[t1] - ptt[t0]) - st * st / m;
        let vs = (pss[s1] - pss[s0]) - ss * ss / m;
        if !(vt > 1e-12 * m) || !(vs > 1e-12 * m) {
            continue;
        }
        let sts: f64 = t[t0..t1].iter().zip(&s[s0..s1]).map(|(a, b)| a * b).sum();
        let r = ((sts - st * ss / m) / math::sqrt(vt * vs)).clamp(-1.0, 1.0);
        values.push((d, r));
    }
    let &(best_lag, best_r) = values
        .iter()
        .fold(None, |acc: Option<&(i64, f64)>, v| match acc {
            Some(b) if b.1 >= v.1 => Some(b),
            _ => Some(v),
        })
        .ok_or_else(|| Error::UndefinedCorrelation("no lag with non-constant overlap".into()))?;
    Ok(CrossCorrelation { values, best_lag, best_r })
}

/// Shannon entropy of a `bins`-bin histogram over `[min, max]`, divided by
/// `ln(bins)` so the result lies in [0, 1].
pub fn shannon_entropy(xs: &[f64], bins: usize) -> f64 {
    if xs.len() < 2 || bins < 2 {
        return 0.0;
    }
    let (lo, hi) = min_max(xs);
    let range = hi - lo;
    if !(range > 0.0) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for x in xs {
        let b = (((x - lo) / range) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = xs.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * math::ln(p)
        })
        .sum();
    h / math::ln(bins as f64)
}

/// Standardized fourth moment (a Gaussian gives 3).
pub fn kurtosis(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::EmptyInput("kurtosis needs at least 2 samples".into()));
    }
    let m = math::mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(Error::DegenerateChannel { channel: 0 });
    }
    let m4 = xs.iter().map(|x| math::powi(x - m, 4)).sum::<f64>() / n;
    Ok(m4 / (m2 * m2))
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub window_len: usize,
    pub overlap: usize,
}

impl Psd {
    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Sum of `power * df`; approximates the variance of the input.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }
}

/// Welch estimate with a periodic Hann window of `round(window_frac * len)`
/// samples, 50 % overlap, per-segment mean removal and density scaling.
pub fn welch_psd(s: &Series, window_frac: f64) -> Result<Psd> {
    let len = s.len();
    let nper = math::round(window_frac * len as f64) as usize;
    if nper < 8 {
        return Err(Error::InvalidArgument(format!("Welch window of {nper} samples is shorter than 8")));
    }
    welch_with_window(s.samples(), s.fs(), nper)
}

/// Welch estimate with an explicit segment length.
pub fn welch_with_window(x: &[f64], fs: f64, nper: usize) -> Result<Psd> {
    if x.len() < nper {
        return Err(Error::EmptyInput(format!("series of {} samples is shorter than a {nper}-sample window", x.len())));
    }
    let overlap = nper / 2;
    let step = nper - overlap;
    let window: Vec<f64> = (0..nper).map(|i| 0.5 - 0.5 * math::cos(2.0 * PI * i as f64 / nper as f64)).collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let nfreq = nper / 2 + 1;
    let mut acc = vec![0.0; nfreq];
    let n_seg = (x.len() - nper) / step + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); nper];
    for k in 0..n_seg {
        let seg = &x[k * step..k * step + nper];
        let m = math::mean(seg);
        for (b, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex64::new((v - m) * w, 0.0);
        }
        let spec = dft(&buf);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += c.norm_sqr();
        }
    }
    let scale = 1.0 / (fs * wss * n_seg as f64);
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let one_sided = if i == 0 || (nper % 2 == 0 && i == nfreq - 1) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..nfreq).map(|i| i as f64 * fs / nper as f64).collect();
    Ok(Psd { freqs, power, window_len: nper, overlap })
}

/// Discrete Fourier transform of arbitrary length (radix-2 FFT, Bluestein otherwise).
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    if n.is_power_of_two() {
        let mut out = x.to_vec();
        fft_pow2(&mut out, false);
        return out;
    }
    // Bluestein: x_k w_k convolved with conj(w), w_k = exp(-i pi k^2 / n).
    let m = (2 * n - 1).next_power_of_two();
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let a = PI * ((k * k) % (2 * n)) as f64 / n as f64;
            Complex64::new(math::cos(a), -math::sin(a))
        })
        .collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    fft_pow2(&mut a, false);
    fft_pow2(&mut b, false);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    fft_pow2(&mut a, true);
    (0..n).map(|k| a[k] * chirp[k] / m as f64).collect()
}

fn fft_pow2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wl = Complex64::new(math::cos(ang), math::sin(ang));
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= wl;
            }
        }
        len <<= 1;
    }
}

/// Gaussian noise of standard deviation `sd` passed through the 4th-order
/// Bessel band-pass for `band`. Deterministic in `seed`.
pub fn band_limited_noise(sd: f64, band: (f64, f64), fs: f64, n: usize, seed: u64) -> Result<Series> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::InvalidArgument(format!("noise standard deviation must be positive, got {sd}")));
    }
    let filter = design_bandpass(FilterFamily::Bessel, DEFAULT_ORDER, band.0, band.1, fs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    let raw: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    Series::new(filter.filter(&raw), fs)
}
