//! Generators, discriminators and their building blocks, with hand-written
//! backpropagation.
//!
//! Every network keeps its trainable scalars in one flat vector; layers hold
//! offsets into it. Activations are `[channel][time]` tensors. Code is
//! generic over `f32` (training, inference) and `f64` (gradient checks).

mod config;
mod discriminator;
mod generator;
mod layers;
mod tensor;

pub use config::{Inception, KernelScheme, ModelConfig, MODEL_NAMES};
pub use discriminator::{DiscCache, Discriminator};
pub use generator::{GenCache, Generator};
pub use layers::swish;
pub use tensor::{ParamLayout, ParamTensor, Scalar, Tensor};

use crate::error::Result;

/// The four networks of the cycle: chest-to-finger and finger-to-chest
/// generators, and the chest-domain and finger-domain discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet<S: Scalar> {
    pub config: ModelConfig,
    pub g_xy: Generator<S>,
    pub g_yx: Generator<S>,
    pub d_x: Discriminator<S>,
    pub d_y: Discriminator<S>,
}

impl<S: Scalar> ModelSet<S> {
    pub fn networks(&self) -> [(&'static str, &ParamLayout, &[S]); 4] {
        [
            ("g_xy", self.g_xy.layout(), self.g_xy.params()),
            ("g_yx", self.g_yx.layout(), self.g_yx.params()),
            ("d_x", self.d_x.layout(), self.d_x.params()),
            ("d_y", self.d_y.layout(), self.d_y.params()),
        ]
    }
}

/// Builds both generators and both discriminators with weights drawn from `seed`.
pub fn build_models<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelSet<S>> {
    cfg.validate()?;
    Ok(ModelSet {
        config: cfg.clone(),
        g_xy: Generator::new(cfg, seed ^ 0x11)?,
        g_yx: Generator::new(cfg, seed ^ 0x22)?,
        d_x: Discriminator::new(cfg, seed ^ 0x33)?,
        d_y: Discriminator::new(cfg, seed ^ 0x44)?,
    })
}

/// Trainable scalar count over all four networks.
pub fn count_parameters<S: Scalar>(models: &ModelSet<S>) -> usize {
    models.networks().iter().map(|(_, l, _)| l.len()).sum()
}
