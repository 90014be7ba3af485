use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Inception, ModelConfig};
use super::layers::{BiLstm, BiLstmCache, Block, BlockCache, Conv, ConvT, Gru, GruCache};
use super::tensor::{Builder, ParamLayout, Scalar, Tensor};
use crate::error::{Error, Result};

/// UNet generator: three encoder blocks with stride-2 convolutions between
/// them, a bottleneck block, a mirrored decoder (transposed convolution,
/// concatenated skip, conv block) per level, and a linear output convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<S: Scalar> {
    channels: usize,
    enc: [Block; 3],
    down: [Conv; 2],
    bottleneck: Block,
    skip_gru: Option<[Gru; 2]>,
    dec: [Block; 2],
    up: [ConvT; 2],
    bilstm: Option<BiLstm>,
    out: Conv,
    layout: ParamLayout,
    params: Vec<S>,
}

/// Intermediate activations kept for the backward pass.
pub struct GenCache<S> {
    enc: [BlockCache<S>; 3],
    enc_out: [Tensor<S>; 2],
    bottleneck: BlockCache<S>,
    bottleneck_out: Tensor<S>,
    gru: Option<[GruCache<S>; 2]>,
    dec: [BlockCache<S>; 2],
    dec_out: Tensor<S>,
    lstm: Option<BiLstmCache<S>>,
    head_in: Tensor<S>,
}

impl<S: Scalar> Generator<S> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut rng);
        let g = cfg.g_init_filters;
        let k = cfg.g_kernel_sizes();
        let feats = [g, 2 * g, 4 * g];
        let norm = cfg.instance_norm;
        let inc = |level: usize| match cfg.inception {
            Inception::None => false,
            Inception::FirstBlock => level == 0,
            Inception::AllBlocks => true,
        };
        let enc = [
            Block::new(&mut b, "enc1", cfg.channels, feats[0], k[0], 1, inc(0), norm),
            Block::new(&mut b, "enc2", feats[0], feats[1], k[1], 1, inc(1), norm),
            Block::new(&mut b, "enc3", feats[1], feats[2], k[2], 1, inc(2), norm),
        ];
        let down = [Conv::new(&mut b, "down1", feats[0], feats[0], k[0], 2), Conv::new(&mut b, "down2", feats[1], feats[1], k[1], 2)];
        let bottleneck = Block::new(&mut b, "bottleneck", feats[2], feats[2], k[2], 1, inc(3), norm);
        let skip_gru = cfg.skip_gru.then(|| [0, 1].map(|i| Gru::new(&mut b, &format!("skip{}.gru", i + 1), feats[i])));
        let up2 = ConvT::new(&mut b, "up2", feats[2], feats[1], k[1]);
        let dec2 = Block::new(&mut b, "dec2", 2 * feats[1], feats[1], k[1], 1, inc(4), norm);
        let up1 = ConvT::new(&mut b, "up1", feats[1], feats[0], k[0]);
        let dec1 = Block::new(&mut b, "dec1", 2 * feats[0], feats[0], k[0], 1, inc(5), norm);
        let bilstm = cfg.output_bilstm.then(|| BiLstm::new(&mut b, "output.bilstm", feats[0]));
        let head_in = bilstm.as_ref().map_or(feats[0], |l| l.out_channels());
        let out = Conv::new(&mut b, "output.conv", head_in, cfg.channels, k[0], 1);
        let (layout, params) = b.finish();
        Ok(Self { channels: cfg.channels, enc, down, bottleneck, skip_gru, dec: [dec1, dec2], up: [up1, up2], bilstm, out, layout, params })
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

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Sets the output convolution to zero, making the generator output zero.
    pub fn zero_output_layer(&mut self) {
        let out = self.out.clone();
        out.zero_weights(&mut self.params);
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.channels != self.channels {
            return Err(Error::Shape(format!("generator expects {} channels, got {}", self.channels, x.channels)));
        }
        if x.len < 4 || x.len % 4 != 0 {
            return Err(Error::Shape(format!("generator input length must be a positive multiple of 4, got {}", x.len)));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("generator input".into()));
        }
        Ok(())
    }

    /// Inference pass.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_train(x).map(|(y, _)| y)
    }

    /// Forward pass that also returns what [`Generator::backward`] needs.
    pub fn forward_train(&self, x: &Tensor<S>) -> Result<(Tensor<S>, GenCache<S>)> {
        self.check_input(x)?;
        let p = &self.params[..];
        let (e1, c_e1) = self.enc[0].forward(p, x);
        let d1 = self.down[0].forward(p, &e1);
        let (e2, c_e2) = self.enc[1].forward(p, &d1);
        let d2 = self.down[1].forward(p, &e2);
        let (e3, c_e3) = self.enc[2].forward(p, &d2);
        let (bt, c_bt) = self.bottleneck.forward(p, &e3);

        let (skips, gru) = match &self.skip_gru {
            Some(grus) => {
                let (s1, g1) = grus[0].forward(p, &e1);
                let (s2, g2) = grus[1].forward(p, &e2);
                ([s1, s2], Some([g1, g2]))
            }
            None => ([e1.clone(), e2.clone()], None),
        };

        let up2 = self.up[1].forward(p, &bt);
        let (u2, c_u2) = self.dec[1].forward(p, &Tensor::concat(&up2, &skips[1]));
        let up1 = self.up[0].forward(p, &u2);
        let (u1, c_u1) = self.dec[0].forward(p, &Tensor::concat(&up1, &skips[0]));
        let (head_in, lstm) = match &self.bilstm {
            Some(l) => {
                let (y, c) = l.forward(p, &u1);
                (y, Some(c))
            }
            None => (u1.clone(), None),
        };
        let y = self.out.forward(p, &head_in);
        if !y.is_finite() {
            return Err(Error::NonFinite("generator output".into()));
        }
        let cache = GenCache {
            enc: [c_e1, c_e2, c_e3],
            enc_out: [e1, e2],
            bottleneck: c_bt,
            bottleneck_out: bt,
            gru,
            dec: [c_u1, c_u2],
            dec_out: u2,
            lstm,
            head_in,
        };
        Ok((y, cache))
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: &GenCache<S>, gy: &Tensor<S>, grad: &mut [S]) -> Tensor<S> {
        let p = &self.params[..];
        let g_head = self.out.backward(p, &cache.head_in, gy, grad);
        let g_u1 = match (&self.bilstm, &cache.lstm) {
            (Some(l), Some(c)) => l.backward(p, c, &g_head, grad),
            _ => g_head,
        };
        let f = [self.enc[0].out_channels(), self.enc[1].out_channels()];

        let g_c1 = self.dec[0].backward(p, &cache.dec[0], &g_u1, grad);
        let (g_up1, g_s1) = g_c1.split(f[0]);
        let g_u2 = self.up[0].backward(p, &cache.dec_out, &g_up1, grad);
        let g_c2 = self.dec[1].backward(p, &cache.dec[1], &g_u2, grad);
        let (g_up2, g_s2) = g_c2.split(f[1]);
        let g_bt = self.up[1].backward(p, &cache.bottleneck_out, &g_up2, grad);

        let (g_e1_skip, g_e2_skip) = match (&self.skip_gru, &cache.gru) {
            (Some(grus), Some(c)) => (grus[0].backward(p, &c[0], &g_s1, grad), grus[1].backward(p, &c[1], &g_s2, grad)),
            _ => (g_s1, g_s2),
        };

        let g_e3 = self.bottleneck.backward(p, &cache.bottleneck, &g_bt, grad);
        let g_d2 = self.enc[2].backward(p, &cache.enc[2], &g_e3, grad);
        let mut g_e2 = self.down[1].backward(p, &cache.enc_out[1], &g_d2, grad);
        g_e2.add_assign(&g_e2_skip);
        let g_d1 = self.enc[1].backward(p, &cache.enc[1], &g_e2, grad);
        let mut g_e1 = self.down[0].backward(p, &cache.enc_out[0], &g_d1, grad);
        g_e1.add_assign(&g_e1_skip);
        self.enc[0].backward(p, &cache.enc[0], &g_e1, grad)
    }
}
