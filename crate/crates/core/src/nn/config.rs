use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Where inception blocks replace plain convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inception {
    None,
    FirstBlock,
    AllBlocks,
}

impl Inception {
    pub fn name(self) -> &'static str {
        match self {
            Inception::None => "none",
            Inception::FirstBlock => "first_block",
            Inception::AllBlocks => "all_blocks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Inception::None),
            "first_block" => Some(Inception::FirstBlock),
            "all_blocks" => Some(Inception::AllBlocks),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelScheme {
    Fixed,
    Variable,
}

impl KernelScheme {
    pub fn name(self) -> &'static str {
        match self {
            KernelScheme::Fixed => "fixed",
            KernelScheme::Variable => "variable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(KernelScheme::Fixed),
            "variable" => Some(KernelScheme::Variable),
            _ => None,
        }
    }
}

pub const MODEL_NAMES: [&str; 11] = ["m01", "m02", "m03", "m04", "m05", "m06", "m07", "m08", "m09", "m10", "m11"];

/// One architecture of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub g_init_filters: usize,
    pub d_init_filters: usize,
    pub inception: Inception,
    pub g_kernels: KernelScheme,
    pub d_kernels: KernelScheme,
    pub skip_gru: bool,
    pub output_bilstm: bool,
    /// Input/output channels of the generators (3, or 1 for single-channel mode).
    pub channels: usize,
    /// Instance normalization inside conv blocks. Always on for the grid;
    /// switching it off makes the generator strictly local in time.
    pub instance_norm: bool,
}

impl ModelConfig {
    /// The named row of the grid, with three channels.
    pub fn by_name(name: &str) -> Result<Self> {
        use Inception::*;
        use KernelScheme::*;
        let row = |g, d, inc, gk, dk, gru, lstm| (g, d, inc, gk, dk, gru, lstm);
        let (g, d, inception, gk, dk, gru, lstm) = match name {
            "m01" => row(8, 4, FirstBlock, Fixed, Fixed, false, false),
            "m02" => row(16, 8, FirstBlock, Fixed, Fixed, false, false),
            "m03" => row(32, 16, FirstBlock, Fixed, Fixed, false, false),
            "m04" => row(16, 8, None, Fixed, Fixed, false, false),
            "m05" => row(16, 8, AllBlocks, Fixed, Fixed, false, false),
            "m06" => row(16, 8, FirstBlock, Variable, Variable, false, false),
            "m07" => row(16, 8, FirstBlock, Variable, Fixed, false, false),
            "m08" => row(16, 8, FirstBlock, Fixed, Variable, false, false),
            "m09" => row(16, 8, FirstBlock, Fixed, Fixed, true, false),
            "m10" => row(16, 8, FirstBlock, Fixed, Fixed, false, true),
            "m11" => row(16, 8, FirstBlock, Fixed, Fixed, true, true),
            _ => return Err(Error::Config(format!("unknown model {name:?}, expected one of m01..m11"))),
        };
        Ok(Self {
            name: name.into(),
            g_init_filters: g,
            d_init_filters: d,
            inception,
            g_kernels: gk,
            d_kernels: dk,
            skip_gru: gru,
            output_bilstm: lstm,
            channels: 3,
            instance_norm: true,
        })
    }

    pub fn all() -> Vec<Self> {
        MODEL_NAMES.iter().map(|n| Self::by_name(n).expect("grid names are valid")).collect()
    }

    pub fn with_g_init(mut self, g: usize) -> Self {
        self.g_init_filters = g;
        self
    }

    pub fn with_channels(mut self, c: usize) -> Self {
        self.channels = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("generator", self.g_init_filters), ("discriminator", self.d_init_filters)] {
            if v == 0 || !v.is_power_of_two() {
                return Err(Error::Config(format!("{what} initial filters must be a power of two, got {v}")));
            }
        }
        if self.d_init_filters < 2 {
            return Err(Error::Config("discriminator needs at least 2 initial filters".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        Ok(())
    }

    /// Kernel per generator level (encoder block order).
    pub fn g_kernel_sizes(&self) -> [usize; 3] {
        match self.g_kernels {
            KernelScheme::Fixed => [9, 9, 9],
            KernelScheme::Variable => [9, 5, 5],
        }
    }

    /// Kernel per discriminator block, then the kernel of the output conv.
    pub fn d_kernel_sizes(&self) -> ([usize; 5], usize) {
        match self.d_kernels {
            KernelScheme::Fixed => ([7; 5], 7),
            KernelScheme::Variable => ([9, 7, 5, 3, 1], 1),
        }
    }

    /// Feature maps of the five discriminator blocks.
    pub fn d_filters(&self) -> Vec<usize> {
        let d = self.d_init_filters;
        vec![d, 2 * d, 4 * d, 8 * d, 4 * d]
    }
}
