use cppg_core::signal::{segment_recording, split_subjects, standardize, standardize_chunk};
use cppg_core::{Chunk, Error, Recording, Source, Split};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn segmentation_indexes_exactly(len_s in 5.0f64..40.0, window_s in prop::sample::select(vec![1.0, 2.5, 5.0]), overlap_frac in 0usize..4, seed in 0u64..100) {
        let fs = 400.0;
        let overlap_s = window_s * overlap_frac as f64 / 5.0;
        let n = (len_s * fs) as usize;
        let chans: Vec<Vec<f64>> = (0..3).map(|c| (0..n).map(|i| ((i as u64 * 2654435761 + seed + c) % 1000) as f64 - 500.0).collect()).collect();
        let rec = Recording::new(chans.clone(), fs).unwrap();
        let chunks = segment_recording(&rec, window_s, overlap_s, Source::Finger, "s", 7).unwrap();
        let win = (window_s * fs).round() as usize;
        let stride = ((window_s - overlap_s) * fs).round() as usize;
        prop_assert_eq!(chunks.len(), (n - win) / stride + 1);
        for (j, ch) in chunks.iter().enumerate() {
            prop_assert_eq!(ch.chunk_index, 7 + j as u32);
            for c in 0..3 {
                for k in (0..win).step_by(97) {
                    prop_assert_eq!(ch.channels()[c][k], chans[c][j * stride + k] as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn standardize_is_idempotent(xs in prop::collection::vec(-1e4f64..1e4, 3..300)) {
        prop_assume!(standardize(&xs).is_some());
        let once = standardize(&xs).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let m = once.iter().sum::<f64>() / once.len() as f64;
        let v = once.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / once.len() as f64;
        prop_assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn window_starts_for_eleven_seconds() {
    let rec = Recording::new(vec![(0..4400).map(|i| i as f64).collect(); 3], 400.0).unwrap();
    let chunks = segment_recording(&rec, 5.0, 2.0, Source::Chest, "s", 0).unwrap();
    let starts: Vec<f64> = chunks.iter().map(|c| c.channels()[0][0] / 400.0).collect();
    assert_eq!(starts, vec![0.0, 3.0, 6.0]);
    let short = Recording::new(vec![vec![0.0; 1999]; 3], 400.0).unwrap();
    assert!(matches!(segment_recording(&short, 5.0, 2.0, Source::Chest, "s", 0), Err(Error::EmptyInput(_))));
}

#[test]
fn standardizing_constant_channel_fails() {
    let mut chans = vec![vec![0.0, 2.0, 0.0, 2.0]; 3];
    chans[1] = vec![1.0; 4];
    let c = Chunk::new(chans, 400.0, Source::Finger, "s", 0).unwrap();
    assert!(matches!(standardize_chunk(&c), Err(Error::DegenerateChannel { channel: 1 })));
    assert_eq!(standardize(&[0.0, 2.0, 0.0, 2.0]).unwrap(), vec![-1.0, 1.0, -1.0, 1.0]);
}

#[test]
fn default_split_proportions() {
    let ids: Vec<String> = (1..=12).map(|i| format!("s{i:02}")).collect();
    let a = split_subjects(&ids, [6, 3, 3]).unwrap();
    for (s, n) in Split::ALL.iter().zip([6, 3, 3]) {
        assert_eq!(a.iter().filter(|(_, sp)| sp == s).count(), n);
    }
    assert!(split_subjects(&ids, [6, 3, 4]).is_err());
}
