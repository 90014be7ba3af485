//! Analytic gradients of the training objective against central finite
//! differences, in f64 on toy-sized networks.

use cppg_core::nn::{ModelConfig, ModelSet, Tensor};
use cppg_core::train::{sample_grads, sample_losses, BatchLosses, LossWeights};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;

pub fn toy_config(base: &str, channels: usize) -> ModelConfig {
    let mut cfg = ModelConfig::by_name(base).unwrap().with_g_init(2).with_channels(channels);
    cfg.d_init_filters = 2;
    cfg
}

pub fn random_input(c: usize, len: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let rows: Vec<Vec<f64>> = (0..c).map(|_| (0..len).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn generator_objective(l: &BatchLosses, w: &LossWeights) -> f64 {
    l.y.total(w) + l.x.total(w)
}

fn disc_objective(l: &BatchLosses) -> f64 {
    l.d_y + l.d_x
}

#[derive(Clone, Copy, Debug)]
enum Net {
    GXy,
    GYx,
    DX,
    DY,
}

fn params_mut(m: &mut ModelSet<f64>, n: Net) -> &mut [f64] {
    match n {
        Net::GXy => m.g_xy.params_mut(),
        Net::GYx => m.g_yx.params_mut(),
        Net::DX => m.d_x.params_mut(),
        Net::DY => m.d_y.params_mut(),
    }
}

/// Worst relative error over every weight of every network, where the
/// objective of a generator weight is the generator loss and that of a
/// discriminator weight is the discriminator loss.
pub fn worst_relative_error(models: &ModelSet<f64>, x: &Tensor<f64>, y: &Tensor<f64>, w: &LossWeights) -> (f64, usize) {
    let (base, g) = sample_grads(models, x, y, w, 1).unwrap();
    let objective = |net: Net, l: &BatchLosses| match net {
        Net::GXy | Net::GYx => generator_objective(l, w),
        Net::DX | Net::DY => disc_objective(l),
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (net, analytic) in [(Net::GXy, &g.g_xy), (Net::GYx, &g.g_yx), (Net::DX, &g.d_x), (Net::DY, &g.d_y)] {
        let mut m = models.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params_mut(&mut m, net)[i];
            let eval = |v: f64, m: &mut ModelSet<f64>| {
                params_mut(m, net)[i] = v;
                objective(net, &sample_losses(m, x, y).unwrap())
            };
            let numeric = (eval(orig + H, &mut m) - eval(orig - H, &mut m)) / (2.0 * H);
            params_mut(&mut m, net)[i] = orig;
            // A central difference cannot resolve gradients below its own
            // rounding noise (a few ulps of the objective over 2h); below that
            // level the comparison is absolute.
            let noise = 4.0 * f64::EPSILON * objective(net, &base).abs().max(1.0) / H;
            let denom = a.abs().max(numeric.abs()).max(noise / 1e-4);
            let e = (a - numeric).abs() / denom;
            worst = worst.max(e);
            checked += 1;
        }
    }
    (worst, checked)
}

