//! Signal containers, segmentation and per-chunk normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Sampling rate of every chunk in the pipeline.
pub const CHUNK_FS: f64 = 400.0;
/// Window length (5 s at 400 Hz).
pub const CHUNK_LEN: usize = 2000;
pub const CHUNK_SECONDS: f64 = 5.0;
pub const OVERLAP_SECONDS: f64 = 2.0;
pub const N_CHANNELS: usize = 3;

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    samples: Vec<f64>,
    fs: f64,
}

impl Series {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::EmptyInput("series has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("series sample {i}")));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// PPG light channel. The numeric value is the row index inside a [`Chunk`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Red = 0,
    Infrared = 1,
    Green = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Red, Channel::Infrared, Channel::Green];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Red => "red",
            Channel::Infrared => "ir",
            Channel::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Finger,
    Chest,
    Restored,
    Synthetic,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Finger => "finger",
            Source::Chest => "chest",
            Source::Restored => "restored",
            Source::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "finger" => Some(Source::Finger),
            "chest" => Some(Source::Chest),
            "restored" => Some(Source::Restored),
            "synthetic" => Some(Source::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelLabel {
    Keep,
    Leave,
}

impl ChannelLabel {
    pub fn name(self) -> &'static str {
        match self {
            ChannelLabel::Keep => "keep",
            ChannelLabel::Leave => "leave",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "keep" => Some(ChannelLabel::Keep),
            "leave" => Some(ChannelLabel::Leave),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A multi-channel recording prior to segmentation (red, IR, green).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channels: Vec<Vec<f64>>,
    pub fs: f64,
}

impl Recording {
    pub fn new(channels: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        if channels.len() != N_CHANNELS {
            return Err(Error::Shape(format!("recording needs {N_CHANNELS} channels, got {}", channels.len())));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("recording channels differ in length".into()));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
        }
        Ok(Self { channels, fs })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: Channel) -> Series {
        Series { samples: self.channels[c.index()].clone(), fs: self.fs }
    }
}

/// One window of a three-channel recording.
///
/// Samples are held as `f64` but chunks produced by segmentation are rounded
/// to `f32` precision, the on-disk sample format.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    channels: Vec<Vec<f64>>,
    pub fs: f64,
    pub source: Source,
    pub subject_id: String,
    pub chunk_index: u32,
    pub labels: Option<[ChannelLabel; 3]>,
}

impl Chunk {
    pub fn new(
        channels: Vec<Vec<f64>>,
        fs: f64,
        source: Source,
        subject_id: impl Into<String>,
        chunk_index: u32,
    ) -> Result<Self> {
        if channels.len() != N_CHANNELS {
            return Err(Error::Shape(format!("chunk needs {N_CHANNELS} channels, got {}", channels.len())));
        }
        let n = channels[0].len();
        if n == 0 || channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("chunk channels must be non-empty and of equal length".into()));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
        }
        for (ci, c) in channels.iter().enumerate() {
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("chunk channel {ci}")));
            }
        }
        Ok(Self { channels, fs, source, subject_id: subject_id.into(), chunk_index, labels: None })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.channels[c.index()]
    }

    pub fn channel_series(&self, c: Channel) -> Series {
        Series { samples: self.channels[c.index()].clone(), fs: self.fs }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True for the pipeline's canonical 2000-sample, 400 Hz window.
    pub fn is_standard_window(&self) -> bool {
        self.len() == CHUNK_LEN && self.fs == CHUNK_FS
    }

    /// Same chunk with every sample rounded to `f32` precision.
    pub fn quantized(mut self) -> Self {
        for c in &mut self.channels {
            for x in c.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
        self
    }

    pub fn with_channels(&self, channels: Vec<Vec<f64>>, source: Source) -> Result<Self> {
        let mut out = Chunk::new(channels, self.fs, source, self.subject_id.clone(), self.chunk_index)?;
        out.labels = self.labels;
        Ok(out)
    }

    /// Identifier used by label files and reports: `<subject>/<chunk_index>`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.subject_id, self.chunk_index)
    }
}

/// A finger chunk and its time-matched chest chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPair {
    pub finger: Chunk,
    pub chest: Chunk,
    pub ecg: Option<Series>,
    pub ground_truth_hr: Option<f64>,
    /// Ground-truth beat (R-peak) times in seconds from the chunk start.
    pub beat_times: Option<Vec<f64>>,
}

impl ChunkPair {
    pub fn new(finger: Chunk, chest: Chunk) -> Result<Self> {
        if finger.subject_id != chest.subject_id || finger.chunk_index != chest.chunk_index {
            return Err(Error::InvalidArgument(format!(
                "pair mismatch: finger {} vs chest {}",
                finger.id(),
                chest.id()
            )));
        }
        if finger.fs != chest.fs {
            return Err(Error::FsMismatch { expected: finger.fs, found: chest.fs });
        }
        if finger.len() != chest.len() {
            return Err(Error::Shape("finger and chest chunks differ in length".into()));
        }
        Ok(Self { finger, chest, ecg: None, ground_truth_hr: None, beat_times: None })
    }

    pub fn subject_id(&self) -> &str {
        &self.finger.subject_id
    }

    pub fn chunk_index(&self) -> u32 {
        self.finger.chunk_index
    }
}

/// Chunk pairs partitioned subject-wise into train/validation/test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<ChunkPair>,
    pub validation: Vec<ChunkPair>,
    pub test: Vec<ChunkPair>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[ChunkPair] {
        match s {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, s: Split) -> &mut Vec<ChunkPair> {
        match s {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that no subject appears in more than one split.
    pub fn validate(&self) -> Result<()> {
        for (i, a) in Split::ALL.iter().enumerate() {
            for b in &Split::ALL[i + 1..] {
                for p in self.split(*a) {
                    if self.split(*b).iter().any(|q| q.subject_id() == p.subject_id()) {
                        return Err(Error::InvalidArgument(format!(
                            "subject {} appears in both {} and {}",
                            p.subject_id(),
                            a.name(),
                            b.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Assigns subjects (in the given order) to splits with the requested counts.
pub fn split_subjects(subjects: &[String], counts: [usize; 3]) -> Result<Vec<(String, Split)>> {
    if counts.iter().sum::<usize>() != subjects.len() {
        return Err(Error::InvalidArgument(format!(
            "split counts {:?} do not cover {} subjects",
            counts,
            subjects.len()
        )));
    }
    let mut out = Vec::with_capacity(subjects.len());
    let mut it = subjects.iter();
    for (split, n) in Split::ALL.iter().zip(counts) {
        for s in it.by_ref().take(n) {
            out.push((s.clone(), *split));
        }
    }
    Ok(out)
}

/// Splits a recording into overlapping windows.
///
/// Windows start every `window_s - overlap_s` seconds; a trailing partial
/// window is dropped. Chunk indices count from `first_index`.
pub fn segment_recording(
    rec: &Recording,
    window_s: f64,
    overlap_s: f64,
    source: Source,
    subject_id: &str,
    first_index: u32,
) -> Result<Vec<Chunk>> {
    if !(window_s > 0.0) || !(overlap_s >= 0.0) || overlap_s >= window_s {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= overlap < window, got window {window_s} s, overlap {overlap_s} s"
        )));
    }
    let win = samples_exact(window_s, rec.fs, "window")?;
    let stride = samples_exact(window_s - overlap_s, rec.fs, "stride")?;
    if rec.len() < win {
        return Err(Error::EmptyInput(format!(
            "recording of {} samples is shorter than one {win}-sample window",
            rec.len()
        )));
    }
    let count = (rec.len() - win) / stride + 1;
    (0..count)
        .map(|j| {
            let start = j * stride;
            let channels = rec.channels.iter().map(|c| c[start..start + win].to_vec()).collect();
            Chunk::new(channels, rec.fs, source, subject_id, first_index + j as u32).map(Chunk::quantized)
        })
        .collect()
}

fn samples_exact(seconds: f64, fs: f64, what: &str) -> Result<usize> {
    let n = seconds * fs;
    let r = math::round(n);
    if math::abs(n - r) > 1e-9 * n.max(1.0) || r < 1.0 {
        return Err(Error::InvalidArgument(format!("{what} of {seconds} s is not a whole number of samples at {fs} Hz")));
    }
    Ok(r as usize)
}

/// Per-channel z-score of a single channel (population standard deviation).
pub fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let m = math::mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    if !(var > 1e-300) {
        return None;
    }
    let sd = math::sqrt(var);
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

/// Zero-mean, unit-variance version of every channel.
pub fn standardize_chunk(c: &Chunk) -> Result<Chunk> {
    let channels = c
        .channels
        .iter()
        .enumerate()
        .map(|(i, ch)| standardize(ch).ok_or(Error::DegenerateChannel { channel: i }))
        .collect::<Result<Vec<_>>>()?;
    c.with_channels(channels, c.source)
}
