use serde::{Deserialize, Serialize};

use super::Tensor4;
use crate::error::{Error, Result};

/// 2D convolution parameters. `weights` is laid out `(out_ch, in_ch / groups, kh, kw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub groups: usize,
}

fn one() -> usize {
    1
}

impl ConvParams {
    /// Zero-initialised conv with "same" padding for odd kernels.
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, groups: usize) -> Self {
        let per_group = if groups == 0 { 0 } else { in_ch / groups };
        Self {
            in_ch,
            out_ch,
            kh: kernel,
            kw: kernel,
            weights: vec![0.0; out_ch * per_group * kernel * kernel],
            bias: vec![0.0; out_ch],
            stride,
            padding: kernel / 2,
            groups,
        }
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_per_group() + i) * self.kh + ky) * self.kw + kx
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[self.weight_index(o, i, ky, kx)]
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "conv2d";
        if self.groups == 0 || self.stride == 0 {
            return Err(Error::param(OP, "groups and stride must be >= 1"));
        }
        if self.in_ch == 0 || self.out_ch == 0 {
            return Err(Error::param(OP, "in_ch and out_ch must be >= 1"));
        }
        if self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return Err(Error::param(
                OP,
                format!("channels ({} -> {}) not divisible by groups {}", self.in_ch, self.out_ch, self.groups),
            ));
        }
        if self.kh % 2 == 0 || self.kw % 2 == 0 {
            return Err(Error::param(OP, format!("kernel {}x{} must be odd", self.kh, self.kw)));
        }
        let expected = self.out_ch * self.in_per_group() * self.kh * self.kw;
        if self.weights.len() != expected {
            return Err(Error::Shape {
                op: OP,
                dim: "weights",
                expected,
                found: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_ch {
            return Err(Error::Shape {
                op: OP,
                dim: "bias",
                expected: self.out_ch,
                found: self.bias.len(),
            });
        }
        Ok(())
    }

    /// Output spatial size for an input of `h x w`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |size: usize, k: usize, dim: &'static str| {
            let padded = size + 2 * self.padding;
            if padded < k {
                return Err(Error::Shape {
                    op: "conv2d",
                    dim,
                    expected: k,
                    found: padded,
                });
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((out(h, self.kh, "height")?, out(w, self.kw, "width")?))
    }
}

/// Cross-correlation of `input` with `p`.
pub fn conv2d_forward(input: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    p.validate()?;
    if input.channels() != p.in_ch {
        return Err(Error::Shape {
            op: "conv2d",
            dim: "channels",
            expected: p.in_ch,
            found: input.channels(),
        });
    }
    let [n, _, h, w] = input.dims();
    let (ho, wo) = p.output_hw(h, w)?;
    let ipg = p.in_per_group();
    let opg = p.out_ch / p.groups;
    let pad = p.padding as isize;
    let mut out = Vec::with_capacity(n * p.out_ch * ho * wo);
    for b in 0..n {
        for o in 0..p.out_ch {
            let g = o / opg;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = p.bias[o] as f64;
                    for i in 0..ipg {
                        let ic = g * ipg + i;
                        for ky in 0..p.kh {
                            let iy = (oy * p.stride) as isize + ky as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..p.kw {
                                let ix = (ox * p.stride) as isize + kx as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += p.weight(o, i, ky, kx) as f64
                                    * input.at(b, ic, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    Tensor4::new([n, p.out_ch, ho, wo], out)
}
