use cppg_core::nn::{build_models, Generator, ModelConfig, ModelSet, Tensor};
use cppg_core::synth::{build_dataset, CohortConfig};
use cppg_core::train::{
    batch_grads, cycle_loss, identity_loss, mean_abs_diff, run_epoch, sample_grads, sample_losses, Adam, AdamConfig,
    ChannelMode, LossWeights, PreparedSplit, TrainOptions, TrainState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(c: usize, len: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let rows: Vec<Vec<f64>> = (0..c).map(|_| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn tiny(name: &str) -> ModelConfig {
    let mut cfg = ModelConfig::by_name(name).unwrap().with_g_init(2);
    cfg.d_init_filters = 2;
    cfg
}

fn hand_mean_abs(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (ra, rb) = (a.to_rows(), b.to_rows());
    let mut s = 0.0;
    let mut n = 0;
    for c in 0..ra.len() {
        for t in 0..ra[c].len() {
            s += (ra[c][t] - rb[c][t]).abs();
            n += 1;
        }
    }
    s / n as f64
}

#[test]
fn reconstruction_losses_by_hand() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = toy(3, 8, &mut rng);
    let y = toy(3, 8, &mut rng);
    let shifted = Tensor { data: x.data.iter().map(|v| v + 0.37).collect(), ..x.clone() };
    assert!((mean_abs_diff(&shifted, &x).unwrap() - 0.37).abs() < 1e-12);
    let doubled = Tensor { data: y.data.iter().map(|v| 2.0 * v).collect(), ..y.clone() };
    let mean_abs_y = y.data.iter().map(|v| v.abs()).sum::<f64>() / 24.0;
    assert!((mean_abs_diff(&doubled, &y).unwrap() - mean_abs_y).abs() < 1e-12);
    assert_eq!(mean_abs_diff(&y, &y).unwrap(), 0.0);

    for seed in 0..5 {
        let m = build_models::<f64>(&tiny("m04"), seed).unwrap();
        let (cx, cy) = cycle_loss(&m.g_xy, &m.g_yx, &x, &y).unwrap();
        let back_x = m.g_yx.forward(&m.g_xy.forward(&x).unwrap()).unwrap();
        let back_y = m.g_xy.forward(&m.g_yx.forward(&y).unwrap()).unwrap();
        assert!((cx - hand_mean_abs(&back_x, &x)).abs() < 1e-10);
        assert!((cy - hand_mean_abs(&back_y, &y)).abs() < 1e-10);
        let id = identity_loss(&m.g_xy, &y).unwrap();
        assert!((id - hand_mean_abs(&m.g_xy.forward(&y).unwrap(), &y)).abs() < 1e-10);
    }
    assert!(mean_abs_diff(&x, &toy(3, 12, &mut rng)).is_err());
}

/// Permutes the input channels of the first layer and the output channels
/// of the output layer.
fn permute_io(g: &Generator<f64>, perm: &[usize]) -> Generator<f64> {
    let mut out = g.clone();
    let c = g.channels();
    let layout = g.layout().clone();
    for t in &layout.tensors {
        let p = g.params();
        let q = out.params_mut();
        if t.name.starts_with("enc1.") && t.shape.len() == 3 && t.shape[1] == c {
            let (co, k) = (t.shape[0], t.shape[2]);
            for o in 0..co {
                for i in 0..c {
                    for j in 0..k {
                        q[t.offset + (o * c + perm[i]) * k + j] = p[t.offset + (o * c + i) * k + j];
                    }
                }
            }
        }
        if t.name.starts_with("output.conv.") {
            let inner: usize = t.shape[1..].iter().product();
            for o in 0..c {
                let (src, dst) = (t.offset + o * inner, t.offset + perm[o] * inner);
                q[dst..dst + inner].copy_from_slice(&p[src..src + inner]);
            }
        }
    }
    out
}

fn permute_rows(x: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let rows = x.to_rows();
    let mut out = rows.clone();
    for (i, r) in rows.into_iter().enumerate() {
        out[perm[i]] = r;
    }
    Tensor::from_rows(&out).unwrap()
}

#[test]
fn reconstruction_losses_commute_with_channel_permutation() {
    let perm = [2, 0, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..3 {
        let mut cfg = tiny("m04");
        cfg.g_init_filters = 4;
        let m = build_models::<f64>(&cfg, seed).unwrap();
        let (x, y) = (toy(3, 64, &mut rng), toy(3, 64, &mut rng));
        let (gp, hp) = (permute_io(&m.g_xy, &perm), permute_io(&m.g_yx, &perm));
        let (xp, yp) = (permute_rows(&x, &perm), permute_rows(&y, &perm));
        let out = permute_rows(&m.g_xy.forward(&x).unwrap(), &perm);
        let out_p = gp.forward(&xp).unwrap();
        assert!(out.data.iter().zip(&out_p.data).all(|(a, b)| (a - b).abs() < 1e-12));
        let id = identity_loss(&m.g_xy, &y).unwrap();
        assert!((id - identity_loss(&gp, &yp).unwrap()).abs() < 1e-12);
        let (cx, cy) = cycle_loss(&m.g_xy, &m.g_yx, &x, &y).unwrap();
        let (px, py) = cycle_loss(&gp, &hp, &xp, &yp).unwrap();
        assert!((cx - px).abs() < 1e-12 && (cy - py).abs() < 1e-12);
    }
}

#[test]
fn discriminators_learn_against_frozen_constant_fakes() {
    let steps = 50;
    let seeds = 5;
    let mut mean = vec![0.0; steps + 1];
    let cfg = AdamConfig::default();
    for seed in 0..seeds {
        let mut m: ModelSet<f64> = build_models(&ModelConfig::by_name("m09").unwrap().with_g_init(2), seed).unwrap();
        m.g_xy.zero_output_layer();
        m.g_yx.zero_output_layer();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x, y) = (toy(3, 400, &mut rng), toy(3, 400, &mut rng));
        let (mut ax, mut ay) = (Adam::new(m.d_x.num_params()), Adam::new(m.d_y.num_params()));
        for s in 0..=steps {
            let (l, g) = sample_grads(&m, &x, &y, &LossWeights::default(), 1).unwrap();
            mean[s] += (l.d_x + l.d_y) / seeds as f64;
            ax.step(&cfg, m.d_x.params_mut(), &g.d_x);
            ay.step(&cfg, m.d_y.params_mut(), &g.d_y);
        }
    }
    for s in 0..steps {
        assert!(mean[s + 1] <= mean[s], "step {s}: {:?}", mean);
    }
    assert!(mean[steps] < mean[0]);
}

#[test]
fn batch_gradient_is_mean_of_sample_gradients() {
    let m = build_models::<f64>(&tiny("m09"), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<_> = (0..3).map(|_| toy(3, 32, &mut rng)).collect();
    let ys: Vec<_> = (0..3).map(|_| toy(3, 32, &mut rng)).collect();
    let w = LossWeights::default();
    let (lb, gb) = batch_grads(&m, &xs, &ys, &w).unwrap();
    let mut sum = vec![0.0; m.g_xy.num_params()];
    let mut adv = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let (l, g) = sample_grads(&m, x, y, &w, 1).unwrap();
        adv += l.y.adv / 3.0;
        for (s, v) in sum.iter_mut().zip(&g.g_xy) {
            *s += v / 3.0;
        }
    }
    assert!((lb.y.adv - adv).abs() < 1e-12);
    assert!(gb.g_xy.iter().zip(&sum).all(|(a, b)| (a - b).abs() < 1e-12));
}

fn small_dataset() -> cppg_core::Dataset {
    let cfg = CohortConfig { n_subjects: 4, recordings_per_subject: 1, recording_s: 11.0, split_counts: [2, 1, 1], seed: 5 };
    build_dataset(&cfg).unwrap().1
}

#[test]
fn one_epoch_smoke_and_determinism() {
    let ds = small_dataset();
    let train: Vec<_> = ds.train.iter().cloned().cycle().take(8).collect();
    let tr = PreparedSplit::new(&train, ChannelMode::All).unwrap();
    let va = PreparedSplit::new(&ds.validation, ChannelMode::All).unwrap();
    let cfg = ModelConfig::by_name("m09").unwrap().with_g_init(2);
    let opts = TrainOptions { max_epochs: 1, ..Default::default() };
    let run = || {
        let mut st = TrainState::new(&cfg, 4).unwrap();
        let r = run_epoch(&mut st, &tr, &va, 400.0, &opts).unwrap();
        (st, r)
    };
    let (a, ra) = run();
    assert!(ra.losses.is_finite());
    assert!(ra.val_rmse.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert_eq!(a.adam[0].t, 2);
    assert_eq!(a.best_epoch, Some(1));
    assert!(a.finished(&opts));
    let (b, _) = run();
    assert_eq!(a, b);

    let green = ModelConfig::by_name("m09").unwrap().with_g_init(2).with_channels(1);
    let tr1 = PreparedSplit::new(&train, ChannelMode::GreenOnly).unwrap();
    let va1 = PreparedSplit::new(&ds.validation, ChannelMode::GreenOnly).unwrap();
    let mut st = TrainState::new(&green, 4).unwrap();
    let r = run_epoch(&mut st, &tr1, &va1, 400.0, &TrainOptions { channels: ChannelMode::GreenOnly, ..opts }).unwrap();
    assert_eq!(r.val_rmse.len(), 1);
}

#[test]
fn non_finite_loss_aborts_training() {
    let ds = small_dataset();
    let tr = PreparedSplit::new(&ds.train, ChannelMode::All).unwrap();
    let va = PreparedSplit::new(&ds.validation, ChannelMode::All).unwrap();
    let cfg = ModelConfig::by_name("m01").unwrap().with_g_init(2);
    let mut st = TrainState::new(&cfg, 1).unwrap();
    st.models.d_y.params_mut()[0] = f32::NAN;
    let err = run_epoch(&mut st, &tr, &va, 400.0, &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, cppg_core::Error::Diverged { epoch: 1, .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_components_are_non_negative(seed in 0u64..10_000, scale in 0.01f64..50.0) {
        let m = build_models::<f64>(&tiny("m06"), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = toy(3, 32, &mut rng);
        x.data.iter_mut().for_each(|v| *v *= scale);
        let y = toy(3, 32, &mut rng);
        let l = sample_losses(&m, &x, &y).unwrap();
        for v in [l.y.adv, l.y.cycle, l.y.id, l.x.adv, l.x.cycle, l.x.id, l.d_y, l.d_x] {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}
