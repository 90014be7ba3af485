//! Chunk quality gate.
//!
//! Finger chunks are screened on kurtosis and normalized entropy, then every
//! channel is compared with a template built by replicating a nominal beat at
//! the channel's own pulse rate. Only chunks whose three finger channels
//! match their templates are kept; the chest channels are then labeled
//! keep/leave, either from a label file or from beat periodicity.

use alloc::vec::Vec;

use crate::dsp::{self, FilterFamily};
use crate::error::{Error, Result};
use crate::eval::{pp_pr, PeakSeries};
use crate::math;
use crate::signal::{ChannelLabel, Chunk, ChunkPair, Series};

/// Thresholds of the finger-chunk gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateThresholds {
    pub kurtosis_max: f64,
    pub entropy_min: f64,
    pub r_min: f64,
    pub entropy_bins: usize,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { kurtosis_max: 3.5, entropy_min: 0.8, r_min: 0.8, entropy_bins: 16 }
    }
}

/// Two-Gaussian beat: a systolic wave and a smaller dicrotic wave, defined
/// over one period with phase in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatShape {
    pub systolic_pos: f64,
    pub systolic_width: f64,
    pub dicrotic_pos: f64,
    pub dicrotic_width: f64,
    pub dicrotic_amp: f64,
}

impl Default for BeatShape {
    fn default() -> Self {
        Self { systolic_pos: 0.33, systolic_width: 0.11, dicrotic_pos: 0.55, dicrotic_width: 0.1, dicrotic_amp: 0.35 }
    }
}

impl BeatShape {
    /// Waveform value at `phase`, periodic with period 1.
    pub fn value(&self, phase: f64) -> f64 {
        let phase = phase - math::floor(phase);
        let g = |mu: f64, w: f64| {
            (-1..=1)
                .map(|k| {
                    let d = phase - mu - k as f64;
                    math::exp(-d * d / (2.0 * w * w))
                })
                .sum::<f64>()
        };
        g(self.systolic_pos, self.systolic_width) + self.dicrotic_amp * g(self.dicrotic_pos, self.dicrotic_width)
    }
}

/// A nominal beat and its replication over the analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTemplate {
    pub nominal_beat: Vec<f64>,
    pub replicated: Series,
    /// Beat period in samples.
    pub period: usize,
}

impl PulseTemplate {
    pub fn full_beats(&self) -> usize {
        self.replicated.len() / self.period
    }
}

/// Replicates the nominal beat at `pr_bpm` over `duration_s` seconds.
pub fn build_template(pr_bpm: f64, fs: f64, duration_s: f64) -> Result<PulseTemplate> {
    if !(30.0..=180.0).contains(&pr_bpm) {
        return Err(Error::InvalidArgument(alloc::format!("pulse rate {pr_bpm} bpm outside [30, 180]")));
    }
    let period = math::round(fs * 60.0 / pr_bpm) as usize;
    let n = math::round(duration_s * fs) as usize;
    let shape = BeatShape::default();
    let nominal_beat: Vec<f64> = (0..period).map(|i| shape.value(i as f64 / period as f64)).collect();
    let replicated = (0..n).map(|i| nominal_beat[i % period]).collect();
    Ok(PulseTemplate { nominal_beat, replicated: Series::new(replicated, fs)?, period })
}

/// Kurtosis/entropy screen of one finger channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScreen {
    /// `None` for a zero-variance channel.
    pub kurtosis: Option<f64>,
    pub entropy: f64,
    pub pass: bool,
}

pub fn screen_channel(x: &[f64], th: &GateThresholds) -> ChannelScreen {
    let kurtosis = dsp::kurtosis(x).ok();
    let entropy = dsp::shannon_entropy(x, th.entropy_bins);
    let pass = matches!(kurtosis, Some(k) if k < th.kurtosis_max) && entropy > th.entropy_min;
    ChannelScreen { kurtosis, entropy, pass }
}

/// Per-channel kurtosis/entropy screen of a finger chunk.
pub fn screen_fppg(chunk: &Chunk, th: &GateThresholds) -> [ChannelScreen; 3] {
    let ch = chunk.channels();
    [screen_channel(&ch[0], th), screen_channel(&ch[1], th), screen_channel(&ch[2], th)]
}

/// Pulse rate of one channel: 4th-order Butterworth 0.5-2.5 Hz, peak picking
/// with a 0.33 s refractory distance, then mean inter-peak interval.
pub fn estimate_pulse_rate(channel: &Series) -> Result<f64> {
    let fs = channel.fs();
    let filter = dsp::design_bandpass(FilterFamily::Butterworth, dsp::DEFAULT_ORDER, dsp::PULSE_BAND.0, dsp::PULSE_BAND.1, fs)?;
    let y = filter.filter(channel.samples());
    let peak_max = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(peak_max > 0.0) {
        return Err(Error::InsufficientPeaks { found: 0, needed: 2 });
    }
    // The refractory distance adapts to the dominant beat period so that a
    // strong dicrotic wave is not counted as a second beat.
    let floor = math::round(PERIODICITY_LAGS_S.0 * fs) as usize;
    let min_dist = dominant_period(&y, fs).map_or(floor, |p| (7 * p / 10).max(floor));
    let peaks = dsp::find_peaks(&y, min_dist, 0.5 * peak_max);
    let ps = PeakSeries::new(peaks, 1.0 / fs);
    pp_pr(&ps).map(|(_, pr)| pr)
}

/// Beat period (samples) from the autocorrelation: the first local maximum
/// in the 0.33-2 s lag range reaching 90 % of the largest one.
fn dominant_period(y: &[f64], fs: f64) -> Option<usize> {
    let n = y.len();
    let lo = math::round(PERIODICITY_LAGS_S.0 * fs) as usize;
    let hi = (math::round(PERIODICITY_LAGS_S.1 * fs) as usize).min(n.saturating_sub(3));
    if lo + 2 > hi {
        return None;
    }
    let r: Vec<f64> = (lo - 1..=hi + 1).map(|k| pearson(&y[..n - k], &y[k..]).unwrap_or(0.0)).collect();
    let peaks: Vec<usize> = (1..r.len() - 1).filter(|&i| r[i] >= r[i - 1] && r[i] >= r[i + 1] && r[i] > 0.0).collect();
    let best = peaks.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
    peaks.into_iter().find(|&i| r[i] >= 0.9 * best).map(|i| i + lo - 1)
}

/// Result of the finger-side gate for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct FppgGate {
    pub screens: [ChannelScreen; 3],
    pub pulse_rate: [Option<f64>; 3],
    pub r_d: [Option<f64>; 3],
    pub ok: bool,
}

/// Screens, estimates per-channel pulse rates and template-matches a finger chunk.
///
/// Template and channel are compared over lags of up to one beat period.
pub fn gate_fppg(chunk: &Chunk, th: &GateThresholds) -> FppgGate {
    let screens = screen_fppg(chunk, th);
    let mut pulse_rate = [None; 3];
    let mut r_d = [None; 3];
    if screens.iter().all(|s| s.pass) {
        for (c, x) in chunk.channels().iter().enumerate() {
            let Ok(series) = Series::new(x.clone(), chunk.fs) else { continue };
            let Ok(pr) = estimate_pulse_rate(&series) else { continue };
            pulse_rate[c] = Some(pr);
            let Ok(t) = build_template(pr, chunk.fs, x.len() as f64 / chunk.fs) else { continue };
            if let Ok(xc) = dsp::xcorr_normalized(t.replicated.samples(), x, t.period) {
                r_d[c] = Some(xc.best_r);
            }
        }
    }
    let ok = screens.iter().all(|s| s.pass) && r_d.iter().all(|r| matches!(r, Some(v) if *v >= th.r_min));
    FppgGate { screens, pulse_rate, r_d, ok }
}

/// Lag range (seconds) searched for beat periodicity in a chest channel.
pub const PERIODICITY_LAGS_S: (f64, f64) = (0.33, 2.0);
pub const PERIODICITY_MIN_R: f64 = 0.5;

/// Keep a channel when its autocorrelation has a local peak of at least 0.5
/// at a lag between 0.33 s and 2 s.
pub fn has_beat_periodicity(x: &[f64], fs: f64) -> bool {
    let n = x.len();
    let lo = math::round(PERIODICITY_LAGS_S.0 * fs) as usize;
    let hi = (math::round(PERIODICITY_LAGS_S.1 * fs) as usize).min(n.saturating_sub(3));
    if lo + 2 > hi {
        return false;
    }
    let corr = |k: usize| pearson(&x[..n - k], &x[k..]).unwrap_or(0.0);
    let r: Vec<f64> = (lo - 1..=hi + 1).map(corr).collect();
    (1..r.len() - 1).any(|i| r[i] >= PERIODICITY_MIN_R && r[i] >= r[i - 1] && r[i] >= r[i + 1])
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ma = math::mean(a);
    let mb = math::mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / math::sqrt(saa * sbb))
}

/// Chest channel labels: manual labels when given, otherwise the periodicity heuristic.
pub fn label_cppg(chunk: &Chunk, manual: Option<[ChannelLabel; 3]>) -> [ChannelLabel; 3] {
    if let Some(m) = manual {
        return m;
    }
    let ch = chunk.channels();
    let lab = |x: &[f64]| if has_beat_periodicity(x, chunk.fs) { ChannelLabel::Keep } else { ChannelLabel::Leave };
    [lab(&ch[0]), lab(&ch[1]), lab(&ch[2])]
}

/// Full gate outcome for a chunk pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityLabel {
    pub fppg: FppgGate,
    pub cppg_labels: [ChannelLabel; 3],
    pub retained: bool,
}

impl QualityLabel {
    pub fn fppg_ok(&self) -> bool {
        self.fppg.ok
    }
}

/// Runs the finger gate and, if it passes, labels the chest channels.
pub fn assess_pair(pair: &ChunkPair, manual: Option<[ChannelLabel; 3]>, th: &GateThresholds) -> QualityLabel {
    let fppg = gate_fppg(&pair.finger, th);
    let cppg_labels = if fppg.ok { label_cppg(&pair.chest, manual) } else { [ChannelLabel::Leave; 3] };
    let retained = fppg.ok && cppg_labels.contains(&ChannelLabel::Keep);
    QualityLabel { fppg, cppg_labels, retained }
}
