//! Synthetic finger/chest PPG cohort with ECG-equivalent beat times.
//!
//! The finger signal is a clean beat train with heart-rate variability. The
//! chest signal carries the same beats scaled per channel, shifted by a
//! constant delay, amplitude-modulated by breathing and corrupted by
//! baseline wander and band-limited noise. `chest_noise_level` scales every
//! chest degradation, so a level of zero leaves only the amplitude scalers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{self, PPG_BAND};
use crate::error::{Error, Result};
use crate::math;
use crate::quality::BeatShape;
use crate::pipeline::{preprocess, Acquisition};
use crate::signal::{split_subjects, Chunk, Dataset, Recording, CHUNK_FS};

/// Parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectModel {
    pub id: String,
    pub base_hr: f64,
    /// Standard deviation of the beat-to-beat heart rate (bpm).
    pub hr_variability: f64,
    /// Finger pulse amplitude per channel (raw units).
    pub finger_amplitude: [f64; 3],
    /// Chest amplitude relative to the finger amplitude, per channel.
    pub chest_scale: [f64; 3],
    /// Relative noise strength per chest channel.
    pub channel_noise: [f64; 3],
    pub morphology: [BeatShape; 3],
    pub respiration_hz: f64,
    pub chest_noise_level: f64,
    pub chest_delay_ms: f64,
}

impl SubjectModel {
    pub fn validate(&self) -> Result<()> {
        if !(40.0..=120.0).contains(&self.base_hr) {
            return Err(Error::InvalidArgument(format!("base heart rate {} outside [40, 120] bpm", self.base_hr)));
        }
        if !(-200.0..=200.0).contains(&self.chest_delay_ms) {
            return Err(Error::InvalidArgument(format!("chest delay {} ms outside [-200, 200]", self.chest_delay_ms)));
        }
        if self.hr_variability < 0.0 || self.chest_noise_level < 0.0 || self.respiration_hz <= 0.0 {
            return Err(Error::InvalidArgument("negative variability/noise or non-positive respiration rate".into()));
        }
        Ok(())
    }

    /// A subject with randomized physiology drawn from `rng`.
    pub fn random(id: impl Into<String>, rng: &mut impl Rng) -> Self {
        let nominal = BeatShape::default();
        let mut shape = || BeatShape {
            systolic_pos: nominal.systolic_pos + rng.random_range(-0.02..0.02),
            systolic_width: nominal.systolic_width * rng.random_range(0.95..1.15),
            dicrotic_pos: nominal.dicrotic_pos + rng.random_range(-0.03..0.03),
            dicrotic_width: nominal.dicrotic_width * rng.random_range(0.9..1.15),
            dicrotic_amp: nominal.dicrotic_amp * rng.random_range(0.75..1.1),
        };
        let morphology = [shape(), shape(), shape()];
        let amp = rng.random_range(500.0..800.0);
        Self {
            id: id.into(),
            base_hr: rng.random_range(58.0..95.0),
            hr_variability: rng.random_range(1.0..2.5),
            finger_amplitude: [amp * rng.random_range(0.9..1.1), amp * rng.random_range(0.9..1.1), amp * rng.random_range(0.9..1.1)],
            chest_scale: [rng.random_range(0.25..0.4), rng.random_range(0.3..0.5), rng.random_range(0.3..0.45)],
            channel_noise: [rng.random_range(1.1..1.3), rng.random_range(0.8..1.0), rng.random_range(0.9..1.1)],
            morphology,
            respiration_hz: rng.random_range(0.18..0.33),
            chest_noise_level: rng.random_range(0.8..1.2),
            chest_delay_ms: rng.random_range(-120.0..120.0),
        }
    }
}

/// Generates `n` subjects named `s01`, `s02`, ...
pub fn default_cohort(n: usize, seed: u64) -> Vec<SubjectModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| SubjectModel::random(format!("s{:02}", i + 1), &mut rng)).collect()
}

/// One synthetic acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub finger: Recording,
    pub chest: Recording,
    pub ecg: Vec<f64>,
    /// R-peak times in seconds from the recording start.
    pub beat_times: Vec<f64>,
}

const FINGER_OFFSET: [f64; 3] = [2100.0, 2400.0, 1800.0];
const CHEST_OFFSET: [f64; 3] = [1500.0, 1700.0, 1300.0];
/// Beats are generated this long before and after the recording.
const BEAT_MARGIN_S: f64 = 3.0;

/// Beat onset times with an AR(1) heart-rate process, covering
/// `[-BEAT_MARGIN_S, duration_s + BEAT_MARGIN_S]`.
fn beat_onsets(subject: &SubjectModel, duration_s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t = -BEAT_MARGIN_S + rng.random_range(0.0..60.0 / subject.base_hr);
    let mut a = 0.0f64;
    let mut out = Vec::new();
    while t < duration_s + BEAT_MARGIN_S {
        out.push(t);
        let z: f64 = StandardNormal.sample(rng);
        a = 0.7 * a + math::sqrt(1.0 - 0.49) * z;
        let hr = (subject.base_hr + subject.hr_variability * a).clamp(35.0, 150.0);
        t += 60.0 / hr;
    }
    out
}

/// Pulse waveform at time `t` given beat onsets.
fn pulse_at(onsets: &[f64], shape: &BeatShape, t: f64) -> f64 {
    let k = onsets.partition_point(|&b| b <= t);
    if k == 0 || k >= onsets.len() {
        return shape.value(0.0);
    }
    let (b0, b1) = (onsets[k - 1], onsets[k]);
    shape.value((t - b0) / (b1 - b0))
}

fn ecg_at(beats: &[f64], t: f64) -> f64 {
    let k = beats.partition_point(|&b| b <= t);
    let mut v = 0.0;
    for &b in &beats[k.saturating_sub(2)..(k + 2).min(beats.len())] {
        let d = t - b;
        let g = |mu: f64, sd: f64| math::exp(-(d - mu) * (d - mu) / (2.0 * sd * sd));
        v += 0.15 * g(-0.16, 0.025) - 0.12 * g(-0.025, 0.008) + 1.0 * g(0.0, 0.009) - 0.2 * g(0.03, 0.01) + 0.3 * g(0.26, 0.045);
    }
    v
}

/// Generates a finger/chest recording pair plus ECG and ground-truth beat times.
pub fn synth_pair(subject: &SubjectModel, duration_s: f64, seed: u64) -> Result<SynthRecording> {
    subject.validate()?;
    if !(duration_s >= 5.0) {
        return Err(Error::InvalidArgument(format!("duration must be at least 5 s, got {duration_s}")));
    }
    let fs = CHUNK_FS;
    let n = math::round(duration_s * fs) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let onsets = beat_onsets(subject, duration_s, &mut rng);
    let delay = subject.chest_delay_ms / 1000.0;
    let level = subject.chest_noise_level;
    let resp_phase = rng.random_range(0.0..2.0 * PI);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let drift_hz = rng.random_range(0.03..0.08);

    let mut finger = Vec::with_capacity(3);
    let mut chest = Vec::with_capacity(3);
    for c in 0..3 {
        let shape = &subject.morphology[c];
        let a_f = subject.finger_amplitude[c];
        let a_c = a_f * subject.chest_scale[c];
        let noise = if level > 0.0 {
            let sd = 1.0 * a_c * level * subject.channel_noise[c];
            dsp::band_limited_noise(sd, PPG_BAND, fs, n, seed.wrapping_mul(31).wrapping_add(c as u64 + 1))?.into_samples()
        } else {
            alloc::vec![0.0; n]
        };
        let f: Vec<f64> = (0..n).map(|i| FINGER_OFFSET[c] + a_f * pulse_at(&onsets, shape, i as f64 / fs)).collect();
        let ch: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let resp = math::sin(2.0 * PI * subject.respiration_hz * t + resp_phase);
                let am = 1.0 + 0.25 * level * resp;
                let wander = level * a_c * (0.8 * resp + 0.6 * math::sin(2.0 * PI * drift_hz * t + drift_phase));
                CHEST_OFFSET[c] + a_c * am * pulse_at(&onsets, shape, t - delay) + wander + noise[i]
            })
            .collect();
        finger.push(f);
        chest.push(ch);
    }
    let ecg = (0..n).map(|i| 0.05 + ecg_at(&onsets, i as f64 / fs)).collect();
    let beat_times = onsets.into_iter().filter(|&b| (0.0..duration_s).contains(&b)).collect();
    Ok(SynthRecording { finger: Recording::new(finger, fs)?, chest: Recording::new(chest, fs)?, ecg, beat_times })
}

/// Standard deviation (raw units) of the training-set noise augmentation.
pub const AUGMENT_SD: f64 = 50.0;

/// Adds band-limited Gaussian noise of standard deviation `sd` (before
/// filtering) to every channel of a raw-scale chest chunk.
pub fn augment_training_chunk(chunk: &Chunk, sd: f64, seed: u64) -> Result<Chunk> {
    let n = chunk.len();
    let channels = chunk
        .channels()
        .iter()
        .enumerate()
        .map(|(c, x)| {
            let noise = dsp::band_limited_noise(sd, PPG_BAND, chunk.fs, n, seed.wrapping_mul(3).wrapping_add(c as u64))?;
            Ok(x.iter().zip(noise.samples()).map(|(a, b)| a + b).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(chunk.with_channels(channels, chunk.source)?.quantized())
}

/// Size and split of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub recordings_per_subject: usize,
    pub recording_s: f64,
    /// Subjects per split, in train/validation/test order.
    pub split_counts: [usize; 3],
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self { n_subjects: 12, recordings_per_subject: 3, recording_s: 120.0, split_counts: [6, 3, 3], seed: 7 }
    }
}

impl CohortConfig {
    /// Split counts for `n` subjects in the default 2:1:1 proportion.
    pub fn proportional_split(n: usize) -> [usize; 3] {
        let val = n / 4;
        let test = n / 4;
        [n - val - test, val, test]
    }
}

/// All recordings of one subject, seeded from the cohort seed and subject position.
pub fn synth_acquisitions(subject: &SubjectModel, position: usize, cfg: &CohortConfig) -> Result<Vec<Acquisition>> {
    (0..cfg.recordings_per_subject)
        .map(|r| {
            let seed = cfg.seed ^ ((position as u64 + 1) << 32) ^ (r as u64 + 1).wrapping_mul(0x9e37_79b9);
            let rec = synth_pair(subject, cfg.recording_s, seed)?;
            Ok(Acquisition {
                subject_id: subject.id.clone(),
                finger: rec.finger,
                chest: rec.chest,
                ecg: Some(rec.ecg),
                beat_times: Some(rec.beat_times),
            })
        })
        .collect()
}

/// Preprocessed (filtered, segmented, paired) but ungated synthetic dataset.
pub fn build_dataset(cfg: &CohortConfig) -> Result<(Vec<SubjectModel>, Dataset)> {
    let subjects = default_cohort(cfg.n_subjects, cfg.seed);
    let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
    let assignment = split_subjects(&ids, cfg.split_counts)?;
    let mut ds = Dataset::default();
    for (i, (s, (_, split))) in subjects.iter().zip(&assignment).enumerate() {
        let mut next = 0u32;
        for acq in synth_acquisitions(s, i, cfg)? {
            let pairs = preprocess(&acq, next)?;
            next += pairs.len() as u32;
            ds.split_mut(*split).extend(pairs);
        }
    }
    Ok((subjects, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::standardize;

    fn subject() -> SubjectModel {
        default_cohort(1, 3).remove(0)
    }

    #[test]
    fn deterministic_under_seed() {
        let s = subject();
        assert_eq!(synth_pair(&s, 10.0, 5).unwrap(), synth_pair(&s, 10.0, 5).unwrap());
        assert_ne!(synth_pair(&s, 10.0, 5).unwrap().chest, synth_pair(&s, 10.0, 6).unwrap().chest);
    }

    #[test]
    fn noiseless_chest_matches_finger_up_to_scale() {
        let mut s = subject();
        s.chest_noise_level = 0.0;
        s.chest_delay_ms = 0.0;
        let r = synth_pair(&s, 10.0, 1).unwrap();
        for c in 0..3 {
            let f = standardize(&r.finger.channels[c]).unwrap();
            let ch = standardize(&r.chest.channels[c]).unwrap();
            for (a, b) in f.iter().zip(&ch) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn beat_count_tracks_heart_rate() {
        let mut s = subject();
        s.base_hr = 72.0;
        let r = synth_pair(&s, 60.0, 2).unwrap();
        let n = r.beat_times.len() as f64;
        assert!((n - 72.0).abs() <= 4.0, "{n}");
    }

    #[test]
    fn rejects_out_of_range_subjects() {
        let mut s = subject();
        s.chest_delay_ms = 250.0;
        assert!(synth_pair(&s, 10.0, 1).is_err());
        let s = subject();
        assert!(synth_pair(&s, 4.0, 1).is_err());
    }
}
