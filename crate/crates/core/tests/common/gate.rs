//! Constructed finger/chest chunks with known gate outcomes.

use cppg_core::pipeline::filter_recording;
use cppg_core::quality::{assess_pair, BeatShape, GateThresholds};
use cppg_core::{ChannelLabel, Chunk, ChunkPair, Recording, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FS: f64 = 400.0;
const N: usize = 2000;
/// Filter warm-up discarded before the analysed window.
const SETTLE: usize = 4000;

/// Pulse train at `bpm` with the nominal beat shape, raw scale.
pub fn pulse_train(bpm: f64, n: usize, amp: f64, offset: f64) -> Vec<f64> {
    let shape = BeatShape::default();
    (0..n).map(|i| offset + amp * shape.value(i as f64 * bpm / 60.0 / FS)).collect()
}

pub fn white(n: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Runs raw channels through the front-end filter as preprocessing would and
/// keeps the last 5 s.
pub fn front_end(channels: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let rec = Recording::new(channels, FS).unwrap();
    filter_recording(&rec).unwrap().channels.into_iter().map(|c| c[c.len() - N..].to_vec()).collect()
}

fn chunk(channels: Vec<Vec<f64>>, source: Source, index: u32) -> Chunk {
    Chunk::new(channels, FS, source, "case", index).unwrap()
}

pub struct GateCase {
    pub name: &'static str,
    pub pair: ChunkPair,
    pub manual: Option<[ChannelLabel; 3]>,
    pub fppg_ok: bool,
    pub labels: [ChannelLabel; 3],
}

impl GateCase {
    pub fn retained(&self) -> bool {
        self.fppg_ok && self.labels.contains(&ChannelLabel::Keep)
    }
}

use ChannelLabel::{Keep, Leave};

/// The constructed suite. Chest channels use a 1 Hz pulse (periodic) or white
/// noise (aperiodic); finger channels are varied one property at a time.
pub fn cases(seed: u64) -> Vec<GateCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = SETTLE + N;
    let bpm = rng.random_range(60.0..90.0);
    let clean = |rng: &mut ChaCha8Rng| {
        let amp = rng.random_range(400.0..900.0);
        front_end((0..3).map(|c| pulse_train(bpm, m, amp, 2000.0 + 100.0 * c as f64)).collect())
    };
    let periodic_chest = || front_end((0..3).map(|_| pulse_train(60.0, m, 200.0, 1500.0)).collect());
    let mut out = Vec::new();
    let mut push = |name, finger: Vec<Vec<f64>>, chest: Vec<Vec<f64>>, manual, fppg_ok, labels| {
        let i = out.len() as u32;
        let pair = ChunkPair::new(chunk(finger, Source::Finger, i), chunk(chest, Source::Chest, i)).unwrap();
        out.push(GateCase { name, pair, manual, fppg_ok, labels });
    };

    push("clean finger, periodic chest", clean(&mut rng), periodic_chest(), None, true, [Keep; 3]);

    let mut chest = periodic_chest();
    chest[1] = white(N, 50.0, &mut rng);
    push("clean finger, one noisy chest channel", clean(&mut rng), chest, None, true, [Keep, Leave, Keep]);

    let chest: Vec<Vec<f64>> = (0..3).map(|_| white(N, 50.0, &mut rng)).collect();
    push("clean finger, all chest channels noisy", clean(&mut rng), chest, None, true, [Leave; 3]);

    let manual = [Leave, Keep, Leave];
    push("manual labels override", clean(&mut rng), periodic_chest(), Some(manual), true, manual);

    let mut finger = clean(&mut rng);
    finger[2] = vec![1234.0; N];
    push("constant finger channel", finger, periodic_chest(), None, false, [Leave; 3]);

    let mut finger = clean(&mut rng);
    let mut spikes = vec![0.0; N];
    for i in (0..N).step_by(400) {
        spikes[i] = 1000.0;
    }
    finger[0] = spikes;
    push("spike train in finger", finger, periodic_chest(), None, false, [Leave; 3]);

    let mut finger = clean(&mut rng);
    finger[1] = front_end(vec![white(m, 300.0, &mut rng); 3]).swap_remove(0);
    push("white noise in finger", finger, periodic_chest(), None, false, [Leave; 3]);

    out
}

/// Runs the gate on every case; returns (agreeing, total) and the names of
/// disagreeing cases.
pub fn agreement(cases: &[GateCase], th: &GateThresholds) -> (usize, usize, Vec<String>) {
    let mut ok = 0;
    let mut bad = Vec::new();
    for c in cases {
        let q = assess_pair(&c.pair, c.manual, th);
        if q.fppg_ok() == c.fppg_ok && q.cppg_labels == c.labels && q.retained == c.retained() {
            ok += 1;
        } else {
            bad.push(format!("{}: got fppg_ok={} labels={:?}", c.name, q.fppg_ok(), q.cppg_labels));
        }
    }
    (ok, cases.len(), bad)
}

/// Whether any chunk rejected at `lo` becomes accepted at a stricter `hi`.
pub fn monotone_in_r_min(cases: &[GateCase], steps: &[f64]) -> bool {
    cases.iter().all(|c| {
        let mut was_rejected = false;
        steps.iter().all(|&r| {
            let th = GateThresholds { r_min: r, ..GateThresholds::default() };
            let ok = assess_pair(&c.pair, c.manual, &th).fppg_ok();
            let fine = !(was_rejected && ok);
            was_rejected |= !ok;
            fine
        })
    })
}
