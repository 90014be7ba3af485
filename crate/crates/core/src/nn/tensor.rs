use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

/// Floating-point type the networks run in.
pub trait Scalar: Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Channel-major activation: `data[c * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self { channels, len, data: vec![S::zero(); channels * len] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || len == 0 || rows.iter().any(|r| r.len() != len) {
            return Err(Error::Shape("tensor rows must be non-empty and of equal length".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&x| S::of(x))).collect();
        Ok(Self { channels: rows.len(), len, data })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.row(c).iter().map(|x| x.as_f64()).collect()).collect()
    }

    pub fn row(&self, c: usize) -> &[S] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [S] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.len)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Stacks the channels of `a` on top of those of `b`.
    pub fn concat(a: &Self, b: &Self) -> Self {
        debug_assert_eq!(a.len, b.len);
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Self { channels: a.channels + b.channels, len: a.len, data }
    }

    /// Inverse of [`Tensor::concat`]: the first `c` channels and the rest.
    pub fn split(&self, c: usize) -> (Self, Self) {
        let cut = c * self.len;
        (
            Self { channels: c, len: self.len, data: self.data[..cut].to_vec() },
            Self { channels: self.channels - c, len: self.len, data: self.data[cut..].to_vec() },
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// One named parameter tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered list of the parameter tensors of one network.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamLayout {
    pub tensors: Vec<ParamTensor>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub(crate) enum Init {
    Uniform(f64),
    Zeros,
    Ones,
}

/// Allocates named tensors and draws their initial values.
pub(crate) struct Builder<'a, R: Rng> {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
    prefix: String,
    rng: &'a mut R,
}

impl<'a, R: Rng> Builder<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { layout: ParamLayout::default(), values: Vec::new(), prefix: String::new(), rng }
    }

    pub fn alloc(&mut self, name: &str, shape: &[usize], init: Init) -> usize {
        let offset = self.values.len();
        let n: usize = shape.iter().product();
        for _ in 0..n {
            let v = match init {
                Init::Uniform(b) => self.rng.random_range(-b..b),
                Init::Zeros => 0.0,
                Init::Ones => 1.0,
            };
            self.values.push(v);
        }
        let full = if self.prefix.is_empty() { name.into() } else { alloc::format!("{}.{}", self.prefix, name) };
        self.layout.tensors.push(ParamTensor { name: full, shape: shape.to_vec(), offset });
        offset
    }

    pub fn finish<S: Scalar>(self) -> (ParamLayout, Vec<S>) {
        (self.layout, self.values.into_iter().map(S::of).collect())
    }
}
