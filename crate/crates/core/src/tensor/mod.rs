//! Small dense NCHW kernels.
//!
//! Storage is `f32`; every reduction accumulates in `f64`. Convolution is
//! cross-correlation (no kernel flip) and supports only odd kernels with
//! symmetric zero padding.

mod conv;
pub mod io;
mod norm;
mod stats;

pub use conv::{conv2d_forward, ConvParams};
pub use norm::{batchnorm_forward, fold_batchnorm, BnParams};
pub use stats::{channel_stats, ChannelStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `(batch, channels, height, width)` activation tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        const NAMES: [&str; 4] = ["batch", "channels", "height", "width"];
        for (d, name) in dims.iter().zip(NAMES) {
            if *d == 0 {
                return Err(Error::param("tensor", format!("dimension `{name}` must be >= 1")));
            }
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::Shape {
                op: "tensor",
                dim: "data",
                expected: len,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn filled(dims: [usize; 4], value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every position.
    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, ch, h, w] = self.dims;
        ((n * ch + c) * h + y) * w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// Contiguous `h * w` plane of one (batch, channel) pair.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        self.check_same_dims("add", other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 + *b as f64) as f32)
            .collect();
        Tensor4::new(self.dims, data)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor4) -> Result<f64> {
        self.check_same_dims("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max))
    }

    /// Nearest-neighbour resize of the spatial dims.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Result<Tensor4> {
        let [n, c, h, w] = self.dims;
        Tensor4::from_fn([n, c, height, width], |b, ch, y, x| {
            let sy = (y * h) / height;
            let sx = (x * w) / width;
            self.at(b, ch, sy, sx)
        })
    }

    pub(crate) fn check_same_dims(&self, op: &'static str, other: &Tensor4) -> Result<()> {
        const NAMES: [&str; 4] = ["batch", "channels", "height", "width"];
        for i in 0..4 {
            if self.dims[i] != other.dims[i] {
                return Err(Error::Shape {
                    op,
                    dim: NAMES[i],
                    expected: self.dims[i],
                    found: other.dims[i],
                });
            }
        }
        Ok(())
    }
}
