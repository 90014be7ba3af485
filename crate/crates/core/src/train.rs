//! The cycle objective, its gradients, and the optimization loop.
//!
//! Domain X is the measured chest signal, domain Y the finger-like target.
//! `g_xy` restores, `g_yx` degrades. Generators are updated first on the sum
//! of both total losses; discriminators then train on the same (detached)
//! fakes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{align, signal_metrics, EvalInput, ALIGN_MAX_LAG_S};
use crate::math;
use crate::nn::{build_models, DiscCache, Discriminator, GenCache, Generator, ModelConfig, ModelSet, Scalar, Tensor};
use crate::signal::{standardize, Chunk, ChunkPair};
use crate::synth::augment_training_chunk;

/// Relative weights of the adversarial, cycle and identity terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub cycle: f64,
    pub id: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { adv: 1.0, cycle: 10.0, id: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.adv, self.cycle, self.id].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// Loss terms of one domain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub adv: f64,
    pub cycle: f64,
    pub id: f64,
}

impl LossComponents {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.adv * self.adv + w.cycle * self.cycle + w.id * self.id
    }
}

/// Totals of the Y (restoring) and X (degrading) branches.
pub fn total_loss(y: &LossComponents, x: &LossComponents, w: &LossWeights) -> (f64, f64) {
    (y.total(w), x.total(w))
}

fn mse_to(target: f64, scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no discriminator scores".into()));
    }
    Ok(scores.iter().map(|s| (target - s) * (target - s)).sum::<f64>() / scores.len() as f64)
}

/// Generator side: `MSE(1, D(fake))`.
pub fn adv_loss_g(fake: &[f64]) -> Result<f64> {
    mse_to(1.0, fake)
}

/// Discriminator side: `MSE(0, D(fake)) + MSE(1, D(real))`.
pub fn adv_loss_d(fake: &[f64], real: &[f64]) -> Result<f64> {
    Ok(mse_to(0.0, fake)? + mse_to(1.0, real)?)
}

/// Mean absolute difference over all elements.
pub fn mean_abs_diff<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64> {
    if a.shape() != b.shape() || a.data.is_empty() {
        return Err(Error::Shape(format!("cannot compare {:?} with {:?}", a.shape(), b.shape())));
    }
    Ok(a.data.iter().zip(&b.data).map(|(p, q)| (p.as_f64() - q.as_f64()).abs()).sum::<f64>() / a.data.len() as f64)
}

/// `(mean |G_yx(G_xy(x)) - x|, mean |G_xy(G_yx(y)) - y|)`.
pub fn cycle_loss<S: Scalar>(g_xy: &Generator<S>, g_yx: &Generator<S>, x: &Tensor<S>, y: &Tensor<S>) -> Result<(f64, f64)> {
    let cx = mean_abs_diff(&g_yx.forward(&g_xy.forward(x)?)?, x)?;
    let cy = mean_abs_diff(&g_xy.forward(&g_yx.forward(y)?)?, y)?;
    Ok((cx, cy))
}

/// `mean |G(z) - z|` for `z` already in the target domain of `g`.
pub fn identity_loss<S: Scalar>(g: &Generator<S>, z: &Tensor<S>) -> Result<f64> {
    mean_abs_diff(&g.forward(z)?, z)
}

/// Parameter gradients of all four networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<S> {
    pub g_xy: Vec<S>,
    pub g_yx: Vec<S>,
    pub d_x: Vec<S>,
    pub d_y: Vec<S>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros(m: &ModelSet<S>) -> Self {
        Self {
            g_xy: vec![S::zero(); m.g_xy.num_params()],
            g_yx: vec![S::zero(); m.g_yx.num_params()],
            d_x: vec![S::zero(); m.d_x.num_params()],
            d_y: vec![S::zero(); m.d_y.num_params()],
        }
    }

    fn add(&mut self, o: &Self) {
        for (a, b) in [(&mut self.g_xy, &o.g_xy), (&mut self.g_yx, &o.g_yx), (&mut self.d_x, &o.d_x), (&mut self.d_y, &o.d_y)] {
            for (p, q) in a.iter_mut().zip(b) {
                *p += *q;
            }
        }
    }
}

/// Losses of one batch, averaged over its samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLosses {
    /// Y branch: restoring generator, finger-domain discriminator.
    pub y: LossComponents,
    pub x: LossComponents,
    pub d_y: f64,
    pub d_x: f64,
}

impl BatchLosses {
    fn add_scaled(&mut self, o: &Self, s: f64) {
        for (a, b) in [(&mut self.y, &o.y), (&mut self.x, &o.x)] {
            a.adv += s * b.adv;
            a.cycle += s * b.cycle;
            a.id += s * b.id;
        }
        self.d_y += s * o.d_y;
        self.d_x += s * o.d_x;
    }

    pub fn is_finite(&self) -> bool {
        [self.y.adv, self.y.cycle, self.y.id, self.x.adv, self.x.cycle, self.x.id, self.d_y, self.d_x].iter().all(|v| v.is_finite())
    }
}

fn l1_grad<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>, scale: f64) -> Tensor<S> {
    let s = S::of(scale / pred.data.len() as f64);
    let data = pred.data.iter().zip(&target.data).map(|(&p, &t)| if p > t { s } else if p < t { -s } else { S::zero() }).collect();
    Tensor { channels: pred.channels, len: pred.len, data }
}

fn disc_backward_input<S: Scalar>(d: &Discriminator<S>, c: &DiscCache<S>, d_score: f64) -> Tensor<S> {
    let mut scratch = vec![S::zero(); d.num_params()];
    d.backward(c, S::of(d_score), &mut scratch)
}

struct Pass<S> {
    out: Tensor<S>,
    cache: GenCache<S>,
}

fn run<S: Scalar>(g: &Generator<S>, x: &Tensor<S>) -> Result<Pass<S>> {
    let (out, cache) = g.forward_train(x)?;
    Ok(Pass { out, cache })
}

/// Losses of one (x, y) sample, forward passes only.
pub fn sample_losses<S: Scalar>(m: &ModelSet<S>, x: &Tensor<S>, y: &Tensor<S>) -> Result<BatchLosses> {
    let fy = m.g_xy.forward(x)?;
    let fx = m.g_yx.forward(y)?;
    let (cx, cy) = (mean_abs_diff(&m.g_yx.forward(&fy)?, x)?, mean_abs_diff(&m.g_xy.forward(&fx)?, y)?);
    let (sy_f, sx_f) = (m.d_y.forward(&fy)?.as_f64(), m.d_x.forward(&fx)?.as_f64());
    let (sy_r, sx_r) = (m.d_y.forward(y)?.as_f64(), m.d_x.forward(x)?.as_f64());
    Ok(BatchLosses {
        y: LossComponents { adv: adv_loss_g(&[sy_f])?, cycle: cy, id: identity_loss(&m.g_xy, y)? },
        x: LossComponents { adv: adv_loss_g(&[sx_f])?, cycle: cx, id: identity_loss(&m.g_yx, x)? },
        d_y: adv_loss_d(&[sy_f], &[sy_r])?,
        d_x: adv_loss_d(&[sx_f], &[sx_r])?,
    })
}

/// Losses and gradients for one (x, y) sample, each scaled by `1 / batch`.
/// Discriminator gradients use the fakes produced here, before any update.
pub fn sample_grads<S: Scalar>(m: &ModelSet<S>, x: &Tensor<S>, y: &Tensor<S>, w: &LossWeights, batch: usize) -> Result<(BatchLosses, Grads<S>)> {
    let inv_b = 1.0 / batch as f64;
    let mut gr = Grads::zeros(m);

    let fy = run(&m.g_xy, x)?;
    let rx = run(&m.g_yx, &fy.out)?;
    let fx = run(&m.g_yx, y)?;
    let ry = run(&m.g_xy, &fx.out)?;
    let iy = run(&m.g_xy, y)?;
    let ix = run(&m.g_yx, x)?;
    let sy = m.d_y.forward_train(&fy.out)?;
    let sx = m.d_x.forward_train(&fx.out)?;
    let ry_real = m.d_y.forward_train(y)?;
    let rx_real = m.d_x.forward_train(x)?;
    let (sy_f, sx_f) = (sy.score.as_f64(), sx.score.as_f64());
    let (sy_r, sx_r) = (ry_real.score.as_f64(), rx_real.score.as_f64());

    let losses = BatchLosses {
        y: LossComponents { adv: adv_loss_g(&[sy_f])?, cycle: mean_abs_diff(&ry.out, y)?, id: mean_abs_diff(&iy.out, y)? },
        x: LossComponents { adv: adv_loss_g(&[sx_f])?, cycle: mean_abs_diff(&rx.out, x)?, id: mean_abs_diff(&ix.out, x)? },
        d_y: adv_loss_d(&[sy_f], &[sy_r])?,
        d_x: adv_loss_d(&[sx_f], &[sx_r])?,
    };

    // X -> Y -> X: adversarial on the restored fake, cycle back to x.
    let g_rx = l1_grad(&rx.out, x, w.cycle * inv_b);
    let mut g_fy = m.g_yx.backward(&rx.cache, &g_rx, &mut gr.g_yx);
    g_fy.add_assign(&disc_backward_input(&m.d_y, &sy, w.adv * inv_b * 2.0 * (sy_f - 1.0)));
    m.g_xy.backward(&fy.cache, &g_fy, &mut gr.g_xy);

    // Y -> X -> Y.
    let g_ry = l1_grad(&ry.out, y, w.cycle * inv_b);
    let mut g_fx = m.g_xy.backward(&ry.cache, &g_ry, &mut gr.g_xy);
    g_fx.add_assign(&disc_backward_input(&m.d_x, &sx, w.adv * inv_b * 2.0 * (sx_f - 1.0)));
    m.g_yx.backward(&fx.cache, &g_fx, &mut gr.g_yx);

    m.g_xy.backward(&iy.cache, &l1_grad(&iy.out, y, w.id * inv_b), &mut gr.g_xy);
    m.g_yx.backward(&ix.cache, &l1_grad(&ix.out, x, w.id * inv_b), &mut gr.g_yx);

    m.d_y.backward(&sy, S::of(inv_b * 2.0 * sy_f), &mut gr.d_y);
    m.d_y.backward(&ry_real, S::of(inv_b * 2.0 * (sy_r - 1.0)), &mut gr.d_y);
    m.d_x.backward(&sx, S::of(inv_b * 2.0 * sx_f), &mut gr.d_x);
    m.d_x.backward(&rx_real, S::of(inv_b * 2.0 * (sx_r - 1.0)), &mut gr.d_x);

    Ok((losses, gr))
}

/// Batch losses and summed gradients. Samples are combined in batch order,
/// so the result does not depend on how per-sample work is scheduled.
pub fn batch_grads<S: Scalar>(m: &ModelSet<S>, xs: &[Tensor<S>], ys: &[Tensor<S>], w: &LossWeights) -> Result<(BatchLosses, Grads<S>)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::EmptyInput("batch needs equally many x and y samples".into()));
    }
    let b = xs.len();
    #[cfg(feature = "parallel")]
    let per: Vec<Result<(BatchLosses, Grads<S>)>> = {
        use rayon::prelude::*;
        xs.par_iter().zip(ys.par_iter()).map(|(x, y)| sample_grads(m, x, y, w, b)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per: Vec<Result<(BatchLosses, Grads<S>)>> = xs.iter().zip(ys).map(|(x, y)| sample_grads(m, x, y, w, b)).collect();

    let mut losses = BatchLosses::default();
    let mut grads = Grads::zeros(m);
    for r in per {
        let (l, g) = r?;
        losses.add_scaled(&l, 1.0 / b as f64);
        grads.add(&g);
    }
    Ok((losses, grads))
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl<S: Scalar> Adam<S> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![S::zero(); n], v: vec![S::zero(); n], t: 0 }
    }

    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [S], grad: &[S]) {
        self.t += 1;
        let t = self.t as i32;
        let lr_t = cfg.lr * math::sqrt(1.0 - libm::pow(cfg.beta2, t as f64)) / (1.0 - libm::pow(cfg.beta1, t as f64));
        let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
        let (c1, c2) = (S::one() - b1, S::one() - b2);
        let (lr_t, eps) = (S::of(lr_t), S::of(cfg.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + c1 * g;
            self.v[i] = b2 * self.v[i] + c2 * g * g;
            params[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Which chunk channels the networks see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    All,
    /// The green channel alone.
    GreenOnly,
}

impl ChannelMode {
    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            3 => Ok(ChannelMode::All),
            1 => Ok(ChannelMode::GreenOnly),
            _ => Err(Error::InvalidArgument(format!("channels must be 3 or 1, got {n}"))),
        }
    }

    pub fn count(self) -> usize {
        match self {
            ChannelMode::All => 3,
            ChannelMode::GreenOnly => 1,
        }
    }

    /// Standardized rows of `chunk` fed to the networks.
    pub fn rows(self, chunk: &Chunk) -> Result<Vec<Vec<f64>>> {
        let pick: &[usize] = match self {
            ChannelMode::All => &[0, 1, 2],
            ChannelMode::GreenOnly => &[2],
        };
        pick.iter().map(|&c| standardize(&chunk.channels()[c]).ok_or(Error::DegenerateChannel { channel: c })).collect()
    }

    pub fn tensor<S: Scalar>(self, chunk: &Chunk) -> Result<Tensor<S>> {
        Tensor::from_rows(&self.rows(chunk)?)
    }
}

/// Runs the restoring generator on one chest chunk; returns standardized rows.
pub fn restore_chunk<S: Scalar>(g_xy: &Generator<S>, chest: &Chunk, mode: ChannelMode) -> Result<Vec<Vec<f64>>> {
    Ok(g_xy.forward(&mode.tensor(chest)?)?.to_rows())
}

/// Evaluation inputs for restoring every chest chunk of `pairs` with `g_xy`.
/// Only the channels the model sees are scored.
pub fn restoration_inputs(g_xy: &Generator<f32>, pairs: &[ChunkPair], mode: ChannelMode) -> Result<Vec<EvalInput>> {
    pairs
        .iter()
        .map(|p| {
            Ok(EvalInput {
                id: p.chest.id(),
                fs: p.chest.fs,
                fppg: mode.rows(&p.finger)?,
                measured: mode.rows(&p.chest)?,
                restored: restore_chunk(g_xy, &p.chest, mode)?,
                ecg: p.ecg.as_ref().map(|e| e.samples().to_vec()),
                truth_pr: p.ground_truth_hr,
            })
        })
        .collect()
}

/// Training-loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub batch: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Discriminator optimizer; the generator settings when `None`.
    pub adam_d: Option<AdamConfig>,
    pub weights: LossWeights,
    pub seed: u64,
    pub channels: ChannelMode,
    /// Caps the training pairs drawn per epoch (all when `None`).
    pub chunks_per_epoch: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch: 4,
            patience: 10,
            adam: AdamConfig::default(),
            adam_d: None,
            weights: LossWeights::default(),
            seed: 1,
            channels: ChannelMode::All,
            chunks_per_epoch: None,
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: BatchLosses,
    /// Validation RMSE_t of restored vs finger, per channel.
    pub val_rmse: Vec<f64>,
}

impl EpochRecord {
    pub fn mean_val_rmse(&self) -> f64 {
        math::mean(&self.val_rmse)
    }
}

/// Everything needed to continue training where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub models: ModelSet<f32>,
    pub adam: [Adam<f32>; 4],
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_models: Option<ModelSet<f32>>,
}

impl TrainState {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let models = build_models::<f32>(cfg, seed)?;
        let adam = [
            Adam::new(models.g_xy.num_params()),
            Adam::new(models.g_yx.num_params()),
            Adam::new(models.d_x.num_params()),
            Adam::new(models.d_y.num_params()),
        ];
        Ok(Self { models, adam, epoch: 0, seed, history: Vec::new(), best_epoch: None, best_models: None })
    }

    pub fn best_val_rmse(&self) -> Option<f64> {
        let e = self.best_epoch?;
        self.history.iter().find(|r| r.epoch == e).map(|r| r.mean_val_rmse())
    }

    /// Epochs since the best one.
    pub fn stale_epochs(&self) -> usize {
        match self.best_epoch {
            Some(b) => self.epoch - b,
            None => self.epoch,
        }
    }

    /// Whether `train` would stop here: epoch budget spent or patience exhausted.
    pub fn finished(&self, opts: &TrainOptions) -> bool {
        self.epoch >= opts.max_epochs || self.stale_epochs() >= opts.patience.max(1)
    }

    /// Generator weights worth keeping: best on validation, else current.
    pub fn final_models(&self) -> &ModelSet<f32> {
        self.best_models.as_ref().unwrap_or(&self.models)
    }

    fn apply(&mut self, g: &Grads<f32>, gen: &AdamConfig, disc: &AdamConfig) {
        let m = &mut self.models;
        self.adam[0].step(gen, m.g_xy.params_mut(), &g.g_xy);
        self.adam[1].step(gen, m.g_yx.params_mut(), &g.g_yx);
        self.adam[2].step(disc, m.d_x.params_mut(), &g.d_x);
        self.adam[3].step(disc, m.d_y.params_mut(), &g.d_y);
    }
}

/// Standardized network inputs of a split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub chest: Vec<Tensor<f32>>,
    pub finger: Vec<Tensor<f32>>,
}

impl PreparedSplit {
    pub fn new(pairs: &[ChunkPair], mode: ChannelMode) -> Result<Self> {
        let mut chest = Vec::with_capacity(pairs.len());
        let mut finger = Vec::with_capacity(pairs.len());
        for p in pairs {
            chest.push(mode.tensor(&p.chest)?);
            finger.push(mode.tensor(&p.finger)?);
        }
        Ok(Self { chest, finger })
    }

    /// `new` plus a noise-augmented copy of every chest chunk, paired with the
    /// same finger chunk. `sd` of zero keeps the split as is.
    pub fn augmented(pairs: &[ChunkPair], mode: ChannelMode, sd: f64, seed: u64) -> Result<Self> {
        let mut s = Self::new(pairs, mode)?;
        if sd == 0.0 {
            return Ok(s);
        }
        for (i, p) in pairs.iter().enumerate() {
            let noisy = augment_training_chunk(&p.chest, sd, seed ^ (i as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f))?;
            s.chest.push(mode.tensor(&noisy)?);
            s.finger.push(s.finger[i].clone());
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.chest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chest.is_empty()
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut xs: Vec<usize> = (0..n).collect();
    let mut ys = xs.clone();
    xs.shuffle(&mut rng);
    // Unpaired: finger chunks are drawn in an independent order.
    ys.shuffle(&mut rng);
    (xs, ys)
}

/// Median-free validation score: per channel, mean RMSE_t of aligned
/// restored chest against the finger signal.
pub fn validation_rmse(g_xy: &Generator<f32>, val: &PreparedSplit, fs: f64) -> Result<Vec<f64>> {
    let c = g_xy.channels();
    let mut sums = vec![0.0; c];
    let max_lag = math::round(ALIGN_MAX_LAG_S * fs) as usize;
    for (x, y) in val.chest.iter().zip(&val.finger) {
        let restored = g_xy.forward(x)?.to_rows();
        let (measured, finger) = (x.to_rows(), y.to_rows());
        let a = align(&restored, &measured, &finger, max_lag)?;
        for ch in 0..c {
            let r = standardize(&a.restored[ch]).unwrap_or_else(|| a.restored[ch].clone());
            let f = standardize(&a.fppg[ch]).unwrap_or_else(|| a.fppg[ch].clone());
            sums[ch] += signal_metrics(&f, &r)?.rmse;
        }
    }
    let n = val.len().max(1) as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// One pass over the training split followed by validation.
pub fn run_epoch(state: &mut TrainState, train: &PreparedSplit, val: &PreparedSplit, fs: f64, opts: &TrainOptions) -> Result<EpochRecord> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training needs non-empty train and validation splits".into()));
    }
    if opts.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    opts.weights.validate()?;
    let epoch = state.epoch + 1;
    let (mut xs, mut ys) = epoch_order(train.len(), state.seed, epoch);
    if let Some(cap) = opts.chunks_per_epoch {
        xs.truncate(cap.max(1));
        ys.truncate(cap.max(1));
    }
    let mut mean = BatchLosses::default();
    let n_batches = xs.len().div_ceil(opts.batch);
    for (bx, by) in xs.chunks(opts.batch).zip(ys.chunks(opts.batch)) {
        let x: Vec<Tensor<f32>> = bx.iter().map(|&i| train.chest[i].clone()).collect();
        let y: Vec<Tensor<f32>> = by.iter().map(|&i| train.finger[i].clone()).collect();
        let (losses, grads) = batch_grads(&state.models, &x, &y, &opts.weights).map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged { epoch, what },
            e => e,
        })?;
        if !losses.is_finite() {
            return Err(Error::Diverged { epoch, what: "a training loss".into() });
        }
        state.apply(&grads, &opts.adam, opts.adam_d.as_ref().unwrap_or(&opts.adam));
        mean.add_scaled(&losses, 1.0 / n_batches as f64);
    }
    let val_rmse = validation_rmse(&state.models.g_xy, val, fs)?;
    if val_rmse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { epoch, what: String::from("validation RMSE") });
    }
    let record = EpochRecord { epoch, losses: mean, val_rmse };
    let score = record.mean_val_rmse();
    if state.best_val_rmse().is_none_or(|b| score < b) {
        state.best_epoch = Some(epoch);
        state.best_models = Some(state.models.clone());
    }
    state.epoch = epoch;
    state.history.push(record.clone());
    Ok(record)
}

/// Trains until `max_epochs` or until validation stops improving.
/// `on_epoch` sees the state after every epoch (for logging and checkpoints).
pub fn train<F>(state: &mut TrainState, train: &PreparedSplit, val: &PreparedSplit, fs: f64, opts: &TrainOptions, mut on_epoch: F) -> Result<()>
where
    F: FnMut(&TrainState, &EpochRecord) -> Result<()>,
{
    while !state.finished(opts) {
        let rec = run_epoch(state, train, val, fs, opts)?;
        on_epoch(state, &rec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversarial_losses_match_mse() {
        assert_eq!(adv_loss_g(&[1.0, 1.0]).unwrap(), 0.0);
        assert!((adv_loss_d(&[0.5; 4], &[0.5; 4]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(adv_loss_d(&[0.0; 3], &[1.0; 3]).unwrap(), 0.0);
        assert!(adv_loss_g(&[]).is_err());
    }

    #[test]
    fn totals_use_default_weights() {
        let c = LossComponents { adv: 0.5, cycle: 0.2, id: 0.1 };
        assert!((c.total(&LossWeights::default()) - 3.0).abs() < 1e-12);
        assert_eq!(LossComponents::default().total(&LossWeights::default()), 0.0);
        let only_id = LossWeights { adv: 0.0, cycle: 0.0, id: 1.0 };
        assert!((LossComponents { adv: 9.0, cycle: 9.0, id: 0.3 }.total(&only_id) - 0.3).abs() < 1e-15);
        assert!(LossWeights { adv: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::<f64>::new(2);
        let mut p = [1.0, -1.0];
        a.step(&AdamConfig::default(), &mut p, &[3.0, -0.5]);
        assert!((p[0] - (1.0 - 2e-4)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 2e-4)).abs() < 1e-9);
    }

    #[test]
    fn epoch_order_is_a_permutation() {
        let (xs, ys) = epoch_order(10, 3, 1);
        let mut s = xs.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_ne!(xs, ys);
        assert_eq!(epoch_order(10, 3, 1), (xs, ys));
    }
}
