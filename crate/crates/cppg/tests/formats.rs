use std::fs;

use cppg::binfmt;
use cppg::checkpoint::{decode_models, encode_models, load_models, load_state, save_models, save_state};
use cppg::dataset::{read_dataset, write_dataset};
use cppg::Error;
use cppg_core::nn::{build_models, ModelConfig};
use cppg_core::train::{run_epoch, ChannelMode, PreparedSplit, TrainOptions, TrainState};
use cppg_core::{ChannelLabel, Chunk, ChunkPair, Dataset, Series, Source, Split};
use proptest::prelude::*;

fn chunk(rows: Vec<Vec<f64>>, source: Source, subject: &str, idx: u32) -> Chunk {
    Chunk::new(rows, 400.0, source, subject, idx).unwrap()
}

fn pair(subject: &str, idx: u32, len: usize, phase: f64) -> ChunkPair {
    let rows = |a: f64| (0..3).map(|c| (0..len).map(|i| ((i as f64 * 0.031 + phase + c as f64) * a).sin() as f32 as f64).collect()).collect();
    let mut p = ChunkPair::new(chunk(rows(1.0), Source::Finger, subject, idx), chunk(rows(1.7), Source::Chest, subject, idx)).unwrap();
    p.chest.labels = Some([ChannelLabel::Keep, ChannelLabel::Leave, ChannelLabel::Keep]);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_files_round_trip(blocks in 1usize..3, channels in 1usize..4, len in 0usize..40, seed in any::<u32>()) {
        let mut k = seed;
        let mut next = || { k = k.wrapping_mul(1_664_525).wrapping_add(1_013_904_223); (k as f32 / 1e6) as f64 };
        let data: Vec<Vec<Vec<f64>>> = (0..blocks).map(|_| (0..channels).map(|_| (0..len).map(|_| next()).collect()).collect()).collect();
        let refs: Vec<&[Vec<f64>]> = data.iter().map(|b| b.as_slice()).collect();
        let bytes = binfmt::encode(&refs);
        prop_assert_eq!(bytes.len(), 20 + 4 * blocks * channels * len);
        let back = binfmt::decode(std::path::Path::new("x"), &bytes).unwrap();
        // An empty channel count decodes to empty blocks.
        if len > 0 || channels > 0 { prop_assert_eq!(back, data); }
    }

    #[test]
    fn truncation_is_reported_with_offset(cut in 1usize..60) {
        let a = vec![vec![1.0, 2.0, 3.0]; 3];
        let bytes = binfmt::encode(&[&a, &a]);
        let n = bytes.len() - cut.min(bytes.len());
        let err = binfmt::decode(std::path::Path::new("x"), &bytes[..n]).unwrap_err();
        let is_format = matches!(err, Error::Format { .. });
        prop_assert!(is_format);
    }
}

#[test]
fn wrong_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.f32");
    let mut bytes = binfmt::encode(&[&[vec![1.0]]]);
    bytes[3] ^= 0xff;
    fs::write(&p, bytes).unwrap();
    let e = binfmt::read(&p).unwrap_err();
    assert!(matches!(e, Error::Format { offset: 0, .. }), "{e}");
    assert!(e.to_string().contains("byte 0"));
}

#[test]
fn dataset_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = Dataset::default();
    for (split, subject) in [(Split::Train, "s01"), (Split::Validation, "s02"), (Split::Test, "s03")] {
        for idx in [0, 2, 10] {
            let mut p = pair(subject, idx, 50, idx as f64);
            p.ground_truth_hr = Some(61.5 + idx as f64);
            p.beat_times = Some(vec![0.1, 1.05]);
            p.ecg = Some(Series::new(vec![0.25; 50], 400.0).unwrap());
            ds.split_mut(split).push(p);
        }
    }
    write_dataset(dir.path(), &ds).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert!(dir.path().join("train/s01/10.ecg.f32").is_file());
    assert!(matches!(read_dataset(&dir.path().join("missing")), Err(Error::Usage(_))));
}

#[test]
fn every_architecture_checkpoint_round_trips_bit_exactly() {
    for cfg in ModelConfig::all() {
        let m = build_models::<f32>(&cfg, 5).unwrap();
        let bytes = encode_models(&m);
        let back = decode_models(std::path::Path::new("m.ckpt"), &bytes).unwrap();
        assert_eq!(back, m, "{}", cfg.name);
        assert_eq!(encode_models(&back), bytes);
    }
}

#[test]
fn checkpoint_rejects_wrong_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    let m = build_models::<f32>(&ModelConfig::by_name("m01").unwrap(), 1).unwrap();
    save_models(&p, &m).unwrap();
    assert_eq!(load_models(&p).unwrap(), m);
    // Narrower weights under the header of the full-width model.
    let mut narrow = build_models::<f32>(&m.config.clone().with_g_init(4), 1).unwrap();
    narrow.config = m.config.clone();
    fs::write(&p, encode_models(&narrow)).unwrap();
    let e = load_models(&p).unwrap_err();
    assert!(matches!(e, Error::Checkpoint { .. }), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let cfg = ModelConfig::by_name("m01").unwrap().with_g_init(2);
    let train: Vec<ChunkPair> = (0..3).map(|i| pair("s01", i, 2000, i as f64 * 0.7)).collect();
    let val = vec![pair("s02", 0, 2000, 0.3)];
    let tr = PreparedSplit::new(&train, ChannelMode::All).unwrap();
    let va = PreparedSplit::new(&val, ChannelMode::All).unwrap();
    let opts = TrainOptions { batch: 2, ..Default::default() };

    let mut a = TrainState::new(&cfg, 3).unwrap();
    run_epoch(&mut a, &tr, &va, 400.0, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("state.ckpt");
    save_state(&p, &a).unwrap();
    let mut b = load_state(&p).unwrap();
    assert_eq!(b, a);

    run_epoch(&mut a, &tr, &va, 400.0, &opts).unwrap();
    run_epoch(&mut b, &tr, &va, 400.0, &opts).unwrap();
    assert_eq!(b, a);
}
