//! Alignment, signal-quality and clinical metrics of a restoration.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::{self, FilterFamily};
use crate::error::{Error, Result};
use crate::math;
use crate::signal::standardize;

/// Default lag search window for alignment (seconds).
pub const ALIGN_MAX_LAG_S: f64 = 2.0;
/// Minimum and maximum plausible inter-beat interval (seconds).
pub const MIN_BEAT_INTERVAL_S: f64 = 0.33;
pub const MAX_BEAT_INTERVAL_S: f64 = 2.0;

/// Detected beat locations.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSeries {
    pub indices: Vec<usize>,
    /// Sampling interval in seconds.
    pub ts: f64,
}

impl PeakSeries {
    pub fn new(indices: Vec<usize>, ts: f64) -> Self {
        Self { indices, ts }
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 * self.ts).collect()
    }

    /// Keeps the longest run of peaks whose gaps lie in the plausible beat range.
    fn validated(self) -> Self {
        let min_gap = MIN_BEAT_INTERVAL_S / self.ts - 1e-9;
        let max_gap = MAX_BEAT_INTERVAL_S / self.ts + 1e-9;
        let mut best: (usize, usize) = (0, self.indices.len().min(1));
        let mut start = 0;
        for i in 1..=self.indices.len() {
            let broken = i == self.indices.len() || {
                let gap = (self.indices[i] - self.indices[i - 1]) as f64;
                gap < min_gap || gap > max_gap
            };
            if broken {
                if i - start > best.1 - best.0 {
                    best = (start, i);
                }
                start = i;
            }
        }
        Self { indices: self.indices[best.0..best.1].to_vec(), ts: self.ts }
    }
}

/// Mean peak-to-peak interval (s) and pulse rate (bpm).
///
/// The interval is averaged over the `N_p - 1` consecutive differences.
pub fn pp_pr(peaks: &PeakSeries) -> Result<(f64, f64)> {
    let n = peaks.count();
    if n < 2 {
        return Err(Error::InsufficientPeaks { found: n, needed: 2 });
    }
    let span = (peaks.indices[n - 1] - peaks.indices[0]) as f64;
    let pp = peaks.ts * span / (n - 1) as f64;
    Ok((pp, 60.0 / pp))
}

/// Same as [`pp_pr`] for beat times given in seconds.
pub fn pp_pr_from_times(times: &[f64]) -> Result<(f64, f64)> {
    let n = times.len();
    if n < 2 {
        return Err(Error::InsufficientPeaks { found: n, needed: 2 });
    }
    let pp = (times[n - 1] - times[0]) / (n - 1) as f64;
    Ok((pp, 60.0 / pp))
}

/// Quantile by linear interpolation between order statistics.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Adaptive threshold: halfway between the rolling median and the rolling
/// 98th percentile of a centered 2 s window, refreshed every 50 samples.
fn rolling_threshold(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let half = (math::round(fs) as usize).max(1);
    let step = 50usize.min(n.max(1));
    let mut out = vec![0.0; n];
    let mut buf = Vec::with_capacity(2 * half + 1);
    let mut start = 0;
    while start < n {
        let center = (start + step / 2).min(n - 1);
        let lo = center.saturating_sub(half);
        let hi = (center + half + 1).min(n);
        buf.clear();
        buf.extend_from_slice(&x[lo..hi]);
        buf.sort_by(|a, b| a.total_cmp(b));
        let med = quantile_sorted(&buf, 0.5);
        let top = quantile_sorted(&buf, 0.98);
        let th = med + 0.5 * (top - med);
        for v in &mut out[start..(start + step).min(n)] {
            *v = th;
        }
        start += step;
    }
    out
}

/// Systolic peaks of a (standardized) PPG channel: local maxima above a
/// rolling-quantile threshold, at least 0.33 s apart.
pub fn detect_systolic_peaks(x: &[f64], fs: f64) -> Result<PeakSeries> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientPeaks { found: 0, needed: 2 });
    }
    let th = rolling_threshold(x, fs);
    let min_dist = math::round(MIN_BEAT_INTERVAL_S * fs) as usize;
    let mut cands: Vec<usize> = (1..n - 1).filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > th[i]).collect();
    cands.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_dist) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    let peaks = PeakSeries::new(kept, 1.0 / fs).validated();
    if peaks.count() < 2 {
        return Err(Error::InsufficientPeaks { found: peaks.count(), needed: 2 });
    }
    Ok(peaks)
}

/// R peaks of an ECG: 5-15 Hz band-pass, squared slope, 120 ms moving
/// integration, thresholding at 30 % of the maximum, then refinement to the
/// largest raw sample within 80 ms.
pub fn detect_r_peaks(ecg: &[f64], fs: f64) -> Result<PeakSeries> {
    let n = ecg.len();
    if n < 3 {
        return Err(Error::InsufficientPeaks { found: 0, needed: 2 });
    }
    let filt = dsp::design_bandpass(FilterFamily::Butterworth, 2, 5.0, 15.0, fs)?;
    let y = filt.filter(ecg);
    let mut energy: Vec<f64> = (0..n)
        .map(|i| {
            let d = if i == 0 { 0.0 } else { y[i] - y[i - 1] };
            d * d
        })
        .collect();
    let w = (math::round(0.12 * fs) as usize).max(1);
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + energy[i];
    }
    for (i, e) in energy.iter_mut().enumerate() {
        let lo = i.saturating_sub(w / 2);
        let hi = (i + w / 2 + 1).min(n);
        *e = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
    }
    let max_e = energy.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(max_e > 0.0) {
        return Err(Error::InsufficientPeaks { found: 0, needed: 2 });
    }
    let min_dist = math::round(MIN_BEAT_INTERVAL_S * fs) as usize;
    let coarse = dsp::find_peaks(&energy, min_dist, 0.3 * max_e);
    let search = math::round(0.08 * fs) as usize;
    let mut refined: Vec<usize> = coarse
        .into_iter()
        .map(|c| {
            let lo = c.saturating_sub(search);
            let hi = (c + search + 1).min(n);
            (lo..hi).max_by(|&a, &b| ecg[a].total_cmp(&ecg[b]).then(b.cmp(&a))).unwrap_or(c)
        })
        .collect();
    refined.dedup();
    let peaks = PeakSeries::new(refined, 1.0 / fs).validated();
    if peaks.count() < 2 {
        return Err(Error::InsufficientPeaks { found: peaks.count(), needed: 2 });
    }
    Ok(peaks)
}

/// Time-domain agreement between a reference `a` and a candidate `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r: f64,
    /// Coefficient of determination of `b` as a predictor of `a`.
    pub r2: f64,
}

pub fn signal_metrics(a: &[f64], b: &[f64]) -> Result<SignalMetrics> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("metric inputs of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let (ma, mb) = (math::mean(a), math::mean(b));
    let (mut sab, mut saa, mut sbb, mut sse, mut sae) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
        sse += (x - y) * (x - y);
        sae += math::abs(x - y);
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::UndefinedCorrelation("zero-variance metric input".into()));
    }
    Ok(SignalMetrics {
        rmse: math::sqrt(sse / n),
        mae: sae / n,
        r: (sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0),
        r2: 1.0 - sse / saa,
    })
}

/// `10 log10(var(reference) / var(candidate - reference))`; `+inf` when the
/// residual has zero variance.
pub fn snr_db(candidate: &[f64], reference: &[f64]) -> Result<f64> {
    if candidate.len() != reference.len() || candidate.is_empty() {
        return Err(Error::Shape("SNR inputs differ in length".into()));
    }
    let diff: Vec<f64> = candidate.iter().zip(reference).map(|(c, r)| c - r).collect();
    let noise = math::variance(&diff);
    let signal = math::variance(reference);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(signal / noise))
}

/// Root-mean-square difference between the Welch spectra of two signals
/// (Hann window of 10 % of the length).
pub fn rmse_f(a: &[f64], b: &[f64], fs: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape("spectral RMSE inputs differ in length".into()));
    }
    let nper = math::round(0.1 * a.len() as f64) as usize;
    if nper < 8 {
        return Err(Error::EmptyInput(format!("{} samples is too short for a Welch window", a.len())));
    }
    let pa = dsp::welch_with_window(a, fs, nper)?;
    let pb = dsp::welch_with_window(b, fs, nper)?;
    let n = pa.power.len() as f64;
    Ok(math::sqrt(pa.power.iter().zip(&pb.power).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n))
}

/// Measured and restored chest signals shifted onto the finger reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTriple {
    pub fppg: Vec<Vec<f64>>,
    pub measured: Vec<Vec<f64>>,
    pub restored: Vec<Vec<f64>>,
    /// Samples by which the chest signals lag the finger signal.
    pub applied_lag: i64,
}

impl AlignedTriple {
    pub fn len(&self) -> usize {
        self.fppg.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index of the channel used for lag estimation: green for three-channel
/// data, the only channel otherwise.
pub fn reference_channel(n_channels: usize) -> usize {
    if n_channels == 3 {
        2
    } else {
        0
    }
}

/// Aligns measured and restored chest signals to the finger signal using the
/// lag that maximizes the restored-vs-finger correlation on the reference
/// channel, then trims the non-overlapping ends.
pub fn align(restored: &[Vec<f64>], measured: &[Vec<f64>], fppg: &[Vec<f64>], max_lag: usize) -> Result<AlignedTriple> {
    let c = fppg.len();
    if c == 0 || restored.len() != c || measured.len() != c {
        return Err(Error::Shape("alignment inputs must have the same channel count".into()));
    }
    let n = fppg[0].len();
    if [restored, measured, fppg].iter().any(|x| x.iter().any(|ch| ch.len() != n)) {
        return Err(Error::Shape("alignment inputs must have equal lengths".into()));
    }
    let rc = reference_channel(c);
    let lag = dsp::xcorr_normalized(&fppg[rc], &restored[rc], max_lag)?.best_lag;
    let (t0, t1) = if lag >= 0 { (0, n - lag as usize) } else { ((-lag) as usize, n) };
    let (s0, s1) = ((t0 as i64 + lag) as usize, (t1 as i64 + lag) as usize);
    Ok(AlignedTriple {
        fppg: fppg.iter().map(|ch| ch[t0..t1].to_vec()).collect(),
        measured: measured.iter().map(|ch| ch[s0..s1].to_vec()).collect(),
        restored: restored.iter().map(|ch| ch[s0..s1].to_vec()).collect(),
        applied_lag: lag,
    })
}

/// Bias and 95 % limits of agreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Bland-Altman statistics of `a - b` (sample standard deviation).
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    if a.len() != b.len() {
        return Err(Error::Shape("Bland-Altman inputs differ in length".into()));
    }
    if a.len() < 2 {
        return Err(Error::EmptyInput("Bland-Altman needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let bias = math::mean(&d);
    let sd = math::sqrt(d.iter().map(|v| (v - bias) * (v - bias)).sum::<f64>() / (d.len() - 1) as f64);
    Ok(BlandAltman { bias, sd, lower: bias - 1.96 * sd, upper: bias + 1.96 * sd })
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (math::mean(a), math::mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Everything needed to score one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    pub id: String,
    pub fs: f64,
    pub fppg: Vec<Vec<f64>>,
    pub measured: Vec<Vec<f64>>,
    pub restored: Vec<Vec<f64>>,
    pub ecg: Option<Vec<f64>>,
    /// Pulse rate from ground-truth beat times, when known.
    pub truth_pr: Option<f64>,
}

/// Time/frequency metrics of one channel of one signal against the finger reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScore {
    pub metrics: SignalMetrics,
    pub snr_db: f64,
    pub rmse_f: f64,
}

/// Pulse-rate extraction of one channel (both values `None` when peak detection failed).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rate {
    pub pp: Option<f64>,
    pub pr: Option<f64>,
}

impl Rate {
    fn from_peaks(x: &[f64], fs: f64) -> Self {
        match detect_systolic_peaks(x, fs).and_then(|p| pp_pr(&p)) {
            Ok((pp, pr)) => Rate { pp: Some(pp), pr: Some(pr) },
            Err(_) => Rate::default(),
        }
    }
}

/// Metrics of one chunk, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkEvaluation {
    pub id: String,
    pub applied_lag: i64,
    pub aligned_len: usize,
    /// Lag (samples) maximizing restored-vs-measured correlation.
    pub lag_restored_vs_measured: i64,
    pub measured: Vec<ChannelScore>,
    pub restored: Vec<ChannelScore>,
    pub fppg_rate: Vec<Rate>,
    pub measured_rate: Vec<Rate>,
    pub restored_rate: Vec<Rate>,
    /// RR interval (s) and heart rate (bpm) from the ECG.
    pub ecg_rate: Rate,
    pub truth_pr: Option<f64>,
}

fn standardized_or_raw(x: &[f64]) -> Vec<f64> {
    standardize(x).unwrap_or_else(|| x.to_vec())
}

/// Aligns and scores one chunk. All signals are z-scored before and after trimming.
pub fn evaluate_chunk(input: &EvalInput) -> Result<ChunkEvaluation> {
    let fs = input.fs;
    let z = |x: &[Vec<f64>]| x.iter().map(|c| standardized_or_raw(c)).collect::<Vec<_>>();
    let (f, m, r) = (z(&input.fppg), z(&input.measured), z(&input.restored));
    let max_lag = math::round(ALIGN_MAX_LAG_S * fs) as usize;
    let aligned = align(&r, &m, &f, max_lag)?;
    let rc = reference_channel(f.len());
    let lag_rm = dsp::xcorr_normalized(&m[rc], &r[rc], max_lag)?.best_lag;

    let score = |cand: &[f64], refr: &[f64]| -> Result<ChannelScore> {
        let (cand, refr) = (standardized_or_raw(cand), standardized_or_raw(refr));
        Ok(ChannelScore { metrics: signal_metrics(&refr, &cand)?, snr_db: snr_db(&cand, &refr)?, rmse_f: rmse_f(&refr, &cand, fs)? })
    };
    let mut measured = Vec::new();
    let mut restored = Vec::new();
    for c in 0..f.len() {
        measured.push(score(&aligned.measured[c], &aligned.fppg[c])?);
        restored.push(score(&aligned.restored[c], &aligned.fppg[c])?);
    }
    let rates = |x: &[Vec<f64>]| x.iter().map(|c| Rate::from_peaks(&standardized_or_raw(c), fs)).collect::<Vec<_>>();
    let ecg_rate = match &input.ecg {
        Some(e) => match detect_r_peaks(e, fs).and_then(|p| pp_pr(&p)) {
            Ok((pp, pr)) => Rate { pp: Some(pp), pr: Some(pr) },
            Err(_) => Rate::default(),
        },
        None => Rate::default(),
    };
    Ok(ChunkEvaluation {
        id: input.id.clone(),
        applied_lag: aligned.applied_lag,
        aligned_len: aligned.len(),
        lag_restored_vs_measured: lag_rm,
        measured,
        restored,
        fppg_rate: rates(&aligned.fppg),
        measured_rate: rates(&aligned.measured),
        restored_rate: rates(&aligned.restored),
        ecg_rate,
        truth_pr: input.truth_pr,
    })
}

/// Medians of the per-chunk signal metrics for one channel and one source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianScores {
    pub rmse_t: f64,
    pub mae: f64,
    pub r: f64,
    pub r2: f64,
    pub snr_db: f64,
    pub rmse_f: f64,
}

fn medians(scores: &[ChannelScore]) -> MedianScores {
    let m = |f: &dyn Fn(&ChannelScore) -> f64| math::median(&scores.iter().map(f).collect::<Vec<_>>());
    MedianScores {
        rmse_t: m(&|s| s.metrics.rmse),
        mae: m(&|s| s.metrics.mae),
        r: m(&|s| s.metrics.r),
        r2: m(&|s| s.metrics.r2),
        snr_db: m(&|s| s.snr_db),
        rmse_f: m(&|s| s.rmse_f),
    }
}

/// Clinical agreement of one channel of one source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClinicalScores {
    /// Correlation of PP with finger PP.
    pub r_pp: Option<f64>,
    /// Correlation of PR with finger PR.
    pub r_pr: Option<f64>,
    /// Correlation of PR with ECG heart rate.
    pub r_hr: Option<f64>,
    /// Correlation of PP with ECG RR interval.
    pub r_rr: Option<f64>,
    /// Mean absolute PR error against the finger PR (bpm).
    pub mae_pr: Option<f64>,
    /// Mean absolute PR error against ECG heart rate (bpm).
    pub mae_hr: Option<f64>,
    /// Mean absolute PR error against ground-truth beat times (bpm).
    pub mae_pr_truth: Option<f64>,
    /// PP agreement with the finger PP.
    pub bland_altman: Option<BlandAltman>,
    /// Chunks where peak detection failed on this source or the finger reference.
    pub excluded: usize,
}

/// Summary statistics of a set of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LagStats {
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub median_abs_ms: f64,
    /// `(bin_start_ms, count)` with 25 ms bins.
    pub histogram: Vec<(f64, usize)>,
}

pub const LAG_BIN_MS: f64 = 25.0;

fn lag_stats(lags: &[i64], fs: f64) -> LagStats {
    let ms: Vec<f64> = lags.iter().map(|&l| l as f64 * 1000.0 / fs).collect();
    if ms.is_empty() {
        return LagStats { mean_ms: f64::NAN, sd_ms: f64::NAN, median_abs_ms: f64::NAN, histogram: Vec::new() };
    }
    let mean = math::mean(&ms);
    let sd = if ms.len() > 1 {
        math::sqrt(ms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (ms.len() - 1) as f64)
    } else {
        0.0
    };
    let abs: Vec<f64> = ms.iter().map(|v| math::abs(*v)).collect();
    let mut histogram: Vec<(f64, usize)> = Vec::new();
    for v in &ms {
        let start = math::floor(v / LAG_BIN_MS) * LAG_BIN_MS;
        match histogram.iter_mut().find(|(s, _)| *s == start) {
            Some(e) => e.1 += 1,
            None => histogram.push((start, 1)),
        }
    }
    histogram.sort_by(|a, b| a.0.total_cmp(&b.0));
    LagStats { mean_ms: mean, sd_ms: sd, median_abs_ms: math::median(&abs), histogram }
}

/// Aggregated report over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n_chunks: usize,
    pub n_channels: usize,
    pub measured: Vec<MedianScores>,
    pub restored: Vec<MedianScores>,
    pub clinical_measured: Vec<ClinicalScores>,
    pub clinical_restored: Vec<ClinicalScores>,
    pub lag_restored_vs_measured: LagStats,
    pub lag_restored_vs_fppg: LagStats,
}

fn clinical(evals: &[ChunkEvaluation], channel: usize, pick: impl Fn(&ChunkEvaluation) -> &Vec<Rate>) -> ClinicalScores {
    let mut pp = Vec::new();
    let mut pp_ref = Vec::new();
    let mut pr = Vec::new();
    let mut pr_ref = Vec::new();
    let mut excluded = 0;
    let (mut pr_e, mut hr_e, mut pp_e, mut rr_e) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut truth_err = Vec::new();
    for e in evals {
        let own = pick(e)[channel];
        let refr = e.fppg_rate[channel];
        let (Some(p), Some(r)) = (own.pp, own.pr) else {
            excluded += 1;
            continue;
        };
        if let Some(t) = e.truth_pr {
            truth_err.push(math::abs(r - t));
        }
        if let (Some(rr), Some(hr)) = (e.ecg_rate.pp, e.ecg_rate.pr) {
            pp_e.push(p);
            rr_e.push(rr);
            pr_e.push(r);
            hr_e.push(hr);
        }
        match (refr.pp, refr.pr) {
            (Some(fp), Some(fr)) => {
                pp.push(p);
                pp_ref.push(fp);
                pr.push(r);
                pr_ref.push(fr);
            }
            _ => excluded += 1,
        }
    }
    let mae = |a: &[f64], b: &[f64]| {
        (!a.is_empty()).then(|| a.iter().zip(b).map(|(x, y)| math::abs(x - y)).sum::<f64>() / a.len() as f64)
    };
    ClinicalScores {
        r_pp: pearson(&pp, &pp_ref),
        r_pr: pearson(&pr, &pr_ref),
        r_hr: pearson(&pr_e, &hr_e),
        r_rr: pearson(&pp_e, &rr_e),
        mae_pr: mae(&pr, &pr_ref),
        mae_hr: mae(&pr_e, &hr_e),
        mae_pr_truth: (!truth_err.is_empty()).then(|| math::mean(&truth_err)),
        bland_altman: bland_altman(&pp, &pp_ref).ok(),
        excluded,
    }
}

/// Reduces per-chunk evaluations to the report tables.
pub fn summarize(evals: &[ChunkEvaluation], fs: f64) -> MetricsReport {
    let n_channels = evals.first().map_or(0, |e| e.measured.len());
    let per = |f: &dyn Fn(&ChunkEvaluation) -> &Vec<ChannelScore>, c: usize| {
        medians(&evals.iter().map(|e| f(e)[c]).collect::<Vec<_>>())
    };
    let measured = (0..n_channels).map(|c| per(&|e| &e.measured, c)).collect();
    let restored = (0..n_channels).map(|c| per(&|e| &e.restored, c)).collect();
    let clinical_measured = (0..n_channels).map(|c| clinical(evals, c, |e| &e.measured_rate)).collect();
    let clinical_restored = (0..n_channels).map(|c| clinical(evals, c, |e| &e.restored_rate)).collect();
    let lag_rm: Vec<i64> = evals.iter().map(|e| e.lag_restored_vs_measured).collect();
    let lag_rf: Vec<i64> = evals.iter().map(|e| e.applied_lag).collect();
    MetricsReport {
        n_chunks: evals.len(),
        n_channels,
        measured,
        restored,
        clinical_measured,
        clinical_restored,
        lag_restored_vs_measured: lag_stats(&lag_rm, fs),
        lag_restored_vs_fppg: lag_stats(&lag_rf, fs),
    }
}

/// Scores every chunk; chunks whose alignment fails are returned separately by id.
pub fn clinical_report(inputs: &[EvalInput]) -> (MetricsReport, Vec<ChunkEvaluation>, Vec<String>) {
    let mut evals = Vec::with_capacity(inputs.len());
    let mut failed = Vec::new();
    for i in inputs {
        match evaluate_chunk(i) {
            Ok(e) => evals.push(e),
            Err(_) => failed.push(i.id.clone()),
        }
    }
    let fs = inputs.first().map_or(1.0, |i| i.fs);
    (summarize(&evals, fs), evals, failed)
}
