//! Restoration of chest-worn three-channel PPG with a cycle-consistent GAN.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the numerical side of
//! the pipeline: band-pass filtering and spectral estimation, the fPPG/cPPG
//! quality gate, a synthetic finger/chest cohort, the UNet generators and
//! convolutional discriminators with hand-written backpropagation, the
//! multi-domain training objective, and the signal/clinical metrics used to
//! judge a restoration. File formats and the command line live in the `cppg`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dsp;
pub mod error;
pub mod eval;
pub(crate) mod math;
pub mod nn;
pub mod pipeline;
pub mod quality;
pub mod signal;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use signal::{Channel, ChannelLabel, Chunk, ChunkPair, Dataset, Recording, Series, Source, Split};
