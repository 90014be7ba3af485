//! Recording-level preprocessing (band-pass, segmentation, pairing) and
//! dataset gating.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dsp::{self, FilterFamily, DEFAULT_ORDER, PPG_BAND};
use crate::error::{Error, Result};
use crate::eval::pp_pr_from_times;
use crate::quality::{assess_pair, GateThresholds, QualityLabel};
use crate::signal::{
    segment_recording, ChannelLabel, ChunkPair, Recording, Series, Source, CHUNK_SECONDS, OVERLAP_SECONDS,
};

/// One simultaneous finger/chest acquisition of a subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub subject_id: String,
    pub finger: Recording,
    pub chest: Recording,
    pub ecg: Option<Vec<f64>>,
    /// Ground-truth beat times (s) from the recording start.
    pub beat_times: Option<Vec<f64>>,
}

/// Applies the 4th-order 0.5-25 Hz Bessel band-pass to every channel.
pub fn filter_recording(rec: &Recording) -> Result<Recording> {
    let f = dsp::design_bandpass(FilterFamily::Bessel, DEFAULT_ORDER, PPG_BAND.0, PPG_BAND.1, rec.fs)?;
    Recording::new(rec.channels.iter().map(|c| f.filter(c)).collect(), rec.fs)
}

/// Filters both recordings, cuts 5 s windows with 2 s overlap and pairs
/// them. ECG windows and in-window beat times ride along when present.
pub fn preprocess(acq: &Acquisition, first_index: u32) -> Result<Vec<ChunkPair>> {
    if acq.finger.fs != acq.chest.fs {
        return Err(Error::FsMismatch { expected: acq.finger.fs, found: acq.chest.fs });
    }
    if acq.finger.len() != acq.chest.len() {
        return Err(Error::Shape("finger and chest recordings differ in length".into()));
    }
    let fs = acq.finger.fs;
    let finger = segment_recording(&filter_recording(&acq.finger)?, CHUNK_SECONDS, OVERLAP_SECONDS, Source::Finger, &acq.subject_id, first_index)?;
    let chest = segment_recording(&filter_recording(&acq.chest)?, CHUNK_SECONDS, OVERLAP_SECONDS, Source::Chest, &acq.subject_id, first_index)?;
    let win = (CHUNK_SECONDS * fs) as usize;
    let stride = ((CHUNK_SECONDS - OVERLAP_SECONDS) * fs) as usize;
    finger
        .into_iter()
        .zip(chest)
        .enumerate()
        .map(|(j, (f, c))| {
            let mut pair = ChunkPair::new(f, c)?;
            let start = j * stride;
            if let Some(ecg) = &acq.ecg {
                if ecg.len() >= start + win {
                    let e: Vec<f64> = ecg[start..start + win].iter().map(|&x| x as f32 as f64).collect();
                    pair.ecg = Some(Series::new(e, fs)?);
                }
            }
            if let Some(beats) = &acq.beat_times {
                let t0 = start as f64 / fs;
                let inside: Vec<f64> = beats.iter().map(|b| b - t0).filter(|t| (0.0..CHUNK_SECONDS).contains(t)).collect();
                pair.ground_truth_hr = pp_pr_from_times(&inside).ok().map(|(_, pr)| pr);
                pair.beat_times = Some(inside);
            }
            Ok(pair)
        })
        .collect()
}

/// Outcome of gating one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub id: String,
    pub label: QualityLabel,
}

/// Gates every pair. Retained pairs carry their chest channel labels.
/// `manual` supplies per-chunk labels (by chunk id) that override the heuristic.
pub fn gate_pairs<F>(pairs: Vec<ChunkPair>, manual: F, th: &GateThresholds) -> (Vec<ChunkPair>, Vec<GateRecord>)
where
    F: Fn(&str) -> Option<[ChannelLabel; 3]>,
{
    let mut kept = Vec::new();
    let mut records = Vec::with_capacity(pairs.len());
    for mut p in pairs {
        let id = p.finger.id();
        let label = assess_pair(&p, manual(&id), th);
        if label.retained {
            p.chest.labels = Some(label.cppg_labels);
            kept.push(p);
        }
        records.push(GateRecord { id, label });
    }
    (kept, records)
}
