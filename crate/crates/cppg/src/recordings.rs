//! Raw synthetic acquisitions and the cohort manifest.
//!
//! ```text
//! <root>/manifest.json
//! <root>/recordings/<subject>/<k>.f32       finger block, chest block
//! <root>/recordings/<subject>/<k>.ecg.f32
//! <root>/recordings/<subject>/<k>.json      fs and beat times
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use cppg_core::pipeline::Acquisition;
use cppg_core::quality::BeatShape;
use cppg_core::synth::{CohortConfig, SubjectModel};
use cppg_core::{Recording, Split};
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDINGS: &str = "recordings";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShapeDto {
    pub systolic_pos: f64,
    pub systolic_width: f64,
    pub dicrotic_pos: f64,
    pub dicrotic_width: f64,
    pub dicrotic_amp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubjectDto {
    pub id: String,
    pub split: String,
    pub base_hr: f64,
    pub hr_variability: f64,
    pub finger_amplitude: [f64; 3],
    pub chest_scale: [f64; 3],
    pub channel_noise: [f64; 3],
    pub morphology: [ShapeDto; 3],
    pub respiration_hz: f64,
    pub chest_noise_level: f64,
    pub chest_delay_ms: f64,
    /// Recording file stems below `recordings/<id>/`.
    pub recordings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CohortDto {
    pub n_subjects: usize,
    pub recordings_per_subject: usize,
    pub recording_s: f64,
    pub split_counts: [usize; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub cohort: CohortDto,
    pub subjects: Vec<SubjectDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordingSidecar {
    fs: f64,
    beat_times: Option<Vec<f64>>,
    has_ecg: bool,
}

impl From<&CohortConfig> for CohortDto {
    fn from(c: &CohortConfig) -> Self {
        Self { n_subjects: c.n_subjects, recordings_per_subject: c.recordings_per_subject, recording_s: c.recording_s, split_counts: c.split_counts, seed: c.seed }
    }
}

fn shape_dto(b: &BeatShape) -> ShapeDto {
    ShapeDto { systolic_pos: b.systolic_pos, systolic_width: b.systolic_width, dicrotic_pos: b.dicrotic_pos, dicrotic_width: b.dicrotic_width, dicrotic_amp: b.dicrotic_amp }
}

impl SubjectDto {
    pub fn new(s: &SubjectModel, split: Split, recordings: Vec<String>) -> Self {
        Self {
            id: s.id.clone(),
            split: split.name().into(),
            base_hr: s.base_hr,
            hr_variability: s.hr_variability,
            finger_amplitude: s.finger_amplitude,
            chest_scale: s.chest_scale,
            channel_noise: s.channel_noise,
            morphology: [shape_dto(&s.morphology[0]), shape_dto(&s.morphology[1]), shape_dto(&s.morphology[2])],
            respiration_hz: s.respiration_hz,
            chest_noise_level: s.chest_noise_level,
            chest_delay_ms: s.chest_delay_ms,
            recordings,
        }
    }

    pub fn split(&self) -> Result<Split> {
        Split::parse(&self.split).ok_or_else(|| Error::Usage(format!("subject {} has unknown split {:?}", self.id, self.split)))
    }
}

pub fn write_manifest(root: &Path, m: &Manifest) -> Result<()> {
    let path = root.join(MANIFEST);
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::Usage(format!("no {MANIFEST} in {}", root.display())));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

fn recording_dir(root: &Path, subject: &str) -> PathBuf {
    root.join(RECORDINGS).join(subject)
}

pub fn write_acquisition(root: &Path, stem: &str, acq: &Acquisition) -> Result<()> {
    let dir = recording_dir(root, &acq.subject_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    binfmt::write(&dir.join(format!("{stem}.f32")), &[&acq.finger.channels, &acq.chest.channels])?;
    if let Some(ecg) = &acq.ecg {
        binfmt::write(&dir.join(format!("{stem}.ecg.f32")), &[&[ecg.clone()]])?;
    }
    let side = RecordingSidecar { fs: acq.finger.fs, beat_times: acq.beat_times.clone(), has_ecg: acq.ecg.is_some() };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_acquisition(root: &Path, subject: &str, stem: &str) -> Result<Acquisition> {
    let dir = recording_dir(root, subject);
    let jpath = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&jpath).map_err(|e| Error::io(&jpath, e))?;
    let side: RecordingSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&jpath, e))?;
    let spath = dir.join(format!("{stem}.f32"));
    let mut blocks = binfmt::read(&spath)?;
    if blocks.len() != 2 {
        return Err(Error::format(&spath, 8, format!("expected 2 blocks (finger, chest), found {}", blocks.len())));
    }
    let chest = Recording::new(blocks.pop().unwrap(), side.fs)?;
    let finger = Recording::new(blocks.pop().unwrap(), side.fs)?;
    let ecg = if side.has_ecg {
        let epath = dir.join(format!("{stem}.ecg.f32"));
        let mut e = binfmt::read(&epath)?;
        if e.len() != 1 || e[0].len() != 1 {
            return Err(Error::format(&epath, 8, "ECG file must hold one single-channel block"));
        }
        Some(e.remove(0).remove(0))
    } else {
        None
    };
    Ok(Acquisition { subject_id: subject.into(), finger, chest, ecg, beat_times: side.beat_times })
}
