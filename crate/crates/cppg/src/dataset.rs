//! Dataset directories: `<root>/<split>/<subject>/<chunk_index>.{f32,json}`.
//!
//! The `.f32` file holds two blocks, finger then chest. The JSON sidecar
//! carries ids, sampling rate, sources, chest labels and ground truth. An
//! ECG window, when present, sits next to them as `<chunk_index>.ecg.f32`.

use std::fs;
use std::path::{Path, PathBuf};

use cppg_core::{ChannelLabel, Chunk, ChunkPair, Dataset, Series, Source, Split};
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    subject_id: String,
    chunk_index: u32,
    fs: f64,
    finger_source: String,
    chest_source: String,
    chest_labels: Option<[String; 3]>,
    ground_truth_hr: Option<f64>,
    beat_times: Option<Vec<f64>>,
    has_ecg: bool,
}

pub fn labels_to_strings(l: &[ChannelLabel; 3]) -> [String; 3] {
    l.map(|x| x.name().to_string())
}

pub fn labels_from_strings(path: &Path, l: &[String; 3]) -> Result<[ChannelLabel; 3]> {
    let parse = |s: &String| ChannelLabel::parse(s).ok_or_else(|| Error::format(path, 0, format!("unknown channel label {s:?}")));
    Ok([parse(&l[0])?, parse(&l[1])?, parse(&l[2])?])
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes one pair below a split directory.
pub fn write_pair(split_dir: &Path, pair: &ChunkPair) -> Result<()> {
    let dir = split_dir.join(pair.subject_id());
    create_dir(&dir)?;
    let stem = pair.chunk_index().to_string();
    binfmt::write(&dir.join(format!("{stem}.f32")), &[pair.finger.channels(), pair.chest.channels()])?;
    if let Some(ecg) = &pair.ecg {
        binfmt::write(&dir.join(format!("{stem}.ecg.f32")), &[&[ecg.samples().to_vec()]])?;
    }
    let side = Sidecar {
        subject_id: pair.subject_id().to_string(),
        chunk_index: pair.chunk_index(),
        fs: pair.finger.fs,
        finger_source: pair.finger.source.name().into(),
        chest_source: pair.chest.source.name().into(),
        chest_labels: pair.chest.labels.as_ref().map(labels_to_strings),
        ground_truth_hr: pair.ground_truth_hr,
        beat_times: pair.beat_times.clone(),
        has_ecg: pair.ecg.is_some(),
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    for split in Split::ALL {
        let dir = root.join(split.name());
        create_dir(&dir)?;
        for p in ds.split(split) {
            write_pair(&dir, p)?;
        }
    }
    Ok(())
}

fn read_pair(dir: &Path, stem: &str) -> Result<ChunkPair> {
    let jpath = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&jpath).map_err(|e| Error::io(&jpath, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&jpath, e))?;
    let spath = dir.join(format!("{stem}.f32"));
    let mut blocks = binfmt::read(&spath)?;
    if blocks.len() != 2 {
        return Err(Error::format(&spath, 8, format!("expected 2 blocks (finger, chest), found {}", blocks.len())));
    }
    let source = |s: &str| Source::parse(s).ok_or_else(|| Error::format(&jpath, 0, format!("unknown source {s:?}")));
    let chest_rows = blocks.pop().unwrap();
    let finger_rows = blocks.pop().unwrap();
    let finger = Chunk::new(finger_rows, side.fs, source(&side.finger_source)?, side.subject_id.clone(), side.chunk_index)?;
    let mut chest = Chunk::new(chest_rows, side.fs, source(&side.chest_source)?, side.subject_id.clone(), side.chunk_index)?;
    chest.labels = side.chest_labels.as_ref().map(|l| labels_from_strings(&jpath, l)).transpose()?;
    let mut pair = ChunkPair::new(finger, chest)?;
    pair.ground_truth_hr = side.ground_truth_hr;
    pair.beat_times = side.beat_times;
    if side.has_ecg {
        let epath = dir.join(format!("{stem}.ecg.f32"));
        let mut e = binfmt::read(&epath)?;
        if e.len() != 1 || e[0].len() != 1 {
            return Err(Error::format(&epath, 8, "ECG file must hold one single-channel block"));
        }
        pair.ecg = Some(Series::new(e.remove(0).remove(0), side.fs)?);
    }
    Ok(pair)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>().map_err(|e| Error::io(dir, e))?;
    v.sort();
    Ok(v)
}

/// Reads every pair of one split directory, ordered by subject then chunk index.
pub fn read_split(dir: &Path) -> Result<Vec<ChunkPair>> {
    let mut pairs = Vec::new();
    for sub in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let mut stems: Vec<u32> = sorted_entries(&sub)?
            .iter()
            .filter_map(|p| p.file_name()?.to_str()?.strip_suffix(".json")?.parse().ok())
            .collect();
        stems.sort_unstable();
        for s in stems {
            pairs.push(read_pair(&sub, &s.to_string())?);
        }
    }
    Ok(pairs)
}

/// Reads a dataset root. Missing split directories are empty splits.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Usage(format!("dataset directory {} does not exist", root.display())));
    }
    let mut ds = Dataset::default();
    for split in Split::ALL {
        let dir = root.join(split.name());
        if dir.is_dir() {
            *ds.split_mut(split) = read_split(&dir)?;
        }
    }
    ds.validate()?;
    Ok(ds)
}

/// Pairs at `path`: the test split of a dataset root, or a split directory itself.
pub fn read_eval_pairs(path: &Path) -> Result<Vec<ChunkPair>> {
    if !path.is_dir() {
        return Err(Error::Usage(format!("data directory {} does not exist", path.display())));
    }
    let test = path.join(Split::Test.name());
    if test.is_dir() {
        read_split(&test)
    } else {
        read_split(path)
    }
}

/// The directory that holds the given split's subject folders.
pub fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.name())
}
