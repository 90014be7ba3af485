use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{mean_sigmoid, Block, BlockCache, Conv};
use super::tensor::{Builder, ParamLayout, Scalar, Tensor};
use crate::error::{Error, Result};

/// Five stride-2 conv blocks, an output convolution to one channel, and a
/// sigmoid of its time average: one score per chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<S: Scalar> {
    channels: usize,
    blocks: Vec<Block>,
    out: Conv,
    layout: ParamLayout,
    params: Vec<S>,
}

pub struct DiscCache<S> {
    blocks: Vec<BlockCache<S>>,
    head_in: Tensor<S>,
    head_len: usize,
    pub score: S,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut rng);
        let (kernels, k_out) = cfg.d_kernel_sizes();
        let mut cin = cfg.channels;
        let mut blocks = Vec::new();
        for (i, (&f, &k)) in cfg.d_filters().iter().zip(&kernels).enumerate() {
            blocks.push(Block::new(&mut b, &format!("block{}", i + 1), cin, f, k, 2, false, cfg.instance_norm));
            cin = f;
        }
        let out = Conv::new(&mut b, "output.conv", cin, 1, k_out, 1);
        let (layout, params) = b.finish();
        Ok(Self { channels: cfg.channels, blocks, out, layout, params })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<S> {
        self.forward_train(x).map(|c| c.score)
    }

    pub fn forward_train(&self, x: &Tensor<S>) -> Result<DiscCache<S>> {
        if x.channels != self.channels {
            return Err(Error::Shape(format!("discriminator expects {} channels, got {}", self.channels, x.channels)));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("discriminator input".into()));
        }
        let p = &self.params[..];
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(p, &h);
            caches.push(c);
            h = y;
        }
        let logits = self.out.forward(p, &h);
        let (score, _) = mean_sigmoid(&logits);
        if !score.is_finite() {
            return Err(Error::NonFinite("discriminator score".into()));
        }
        Ok(DiscCache { blocks: caches, head_len: logits.len, head_in: h, score })
    }

    /// Backpropagates `d loss / d score`; returns the input gradient.
    pub fn backward(&self, cache: &DiscCache<S>, d_score: S, grad: &mut [S]) -> Tensor<S> {
        let p = &self.params[..];
        let s = cache.score;
        let d_mean = d_score * s * (S::one() - s);
        let per = d_mean / S::of(cache.head_len as f64);
        let g_logits = Tensor { channels: 1, len: cache.head_len, data: alloc::vec![per; cache.head_len] };
        let mut g = self.out.backward(p, &cache.head_in, &g_logits, grad);
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            g = b.backward(p, c, &g, grad);
        }
        g
    }
}
