//! Structural re-parameterization: collapse a 3×3 + 1×1 (+ identity) block,
//! each branch followed by its own batch norm, into one 3×3 conv.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{batchnorm_forward, conv2d_forward, fold_batchnorm, BnParams, ConvParams, Tensor4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBn {
    pub conv: ConvParams,
    pub bn: BnParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepBranchParams {
    pub conv3: ConvBn,
    pub conv1: ConvBn,
    #[serde(default)]
    pub identity_bn: Option<BnParams>,
}

impl RepBranchParams {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "reparam_fold";
        let c3 = &self.conv3.conv;
        let c1 = &self.conv1.conv;
        c3.validate()?;
        c1.validate()?;
        if (c3.kh, c3.kw, c3.padding) != (3, 3, 1) {
            return Err(Error::param(OP, "conv3 must be 3x3 with padding 1"));
        }
        if (c1.kh, c1.kw, c1.padding) != (1, 1, 0) {
            return Err(Error::param(OP, "conv1 must be 1x1 with padding 0"));
        }
        if (c3.in_ch, c3.out_ch, c3.stride, c3.groups) != (c1.in_ch, c1.out_ch, c1.stride, c1.groups) {
            return Err(Error::param(OP, "conv3 and conv1 must share channels, stride and groups"));
        }
        if let Some(id) = &self.identity_bn {
            if c3.in_ch != c3.out_ch {
                return Err(Error::param(
                    OP,
                    format!("identity branch needs in_ch == out_ch, got {} -> {}", c3.in_ch, c3.out_ch),
                ));
            }
            if c3.stride != 1 {
                return Err(Error::param(OP, "identity branch needs stride 1"));
            }
            if id.channels() != c3.out_ch {
                return Err(Error::Shape {
                    op: OP,
                    dim: "identity_bn",
                    expected: c3.out_ch,
                    found: id.channels(),
                });
            }
        }
        Ok(())
    }

    /// Sum of the branch outputs, each evaluated separately.
    pub fn forward_branches(&self, x: &Tensor4) -> Result<Tensor4> {
        self.validate()?;
        let y3 = batchnorm_forward(&conv2d_forward(x, &self.conv3.conv)?, &self.conv3.bn)?;
        let y1 = batchnorm_forward(&conv2d_forward(x, &self.conv1.conv)?, &self.conv1.bn)?;
        let mut y = y3.add(&y1)?;
        if let Some(id) = &self.identity_bn {
            y = y.add(&batchnorm_forward(x, id)?)?;
        }
        Ok(y)
    }
}

/// Single 3×3 conv equivalent to [`RepBranchParams::forward_branches`].
pub fn reparam_fold(branches: &RepBranchParams) -> Result<ConvParams> {
    branches.validate()?;
    let f3 = fold_batchnorm(&branches.conv3.conv, &branches.conv3.bn)?;
    let f1 = fold_batchnorm(&branches.conv1.conv, &branches.conv1.bn)?;

    let mut weights: Vec<f64> = f3.weights.iter().map(|w| *w as f64).collect();
    let mut bias: Vec<f64> = f3.bias.iter().zip(&f1.bias).map(|(a, b)| *a as f64 + *b as f64).collect();
    let ipg = f3.in_per_group();
    for o in 0..f3.out_ch {
        for i in 0..ipg {
            weights[f3.weight_index(o, i, 1, 1)] += f1.weight(o, i, 0, 0) as f64;
        }
    }
    if let Some(id) = &branches.identity_bn {
        for (o, (scale, shift)) in id.affine()?.into_iter().enumerate() {
            // Dirac: output channel o reads input channel o, which is index o % ipg in its group.
            weights[f3.weight_index(o, o % ipg, 1, 1)] += scale;
            bias[o] += shift;
        }
    }
    Ok(ConvParams {
        weights: weights.into_iter().map(|w| w as f32).collect(),
        bias: bias.into_iter().map(|b| b as f32).collect(),
        ..f3
    })
}
