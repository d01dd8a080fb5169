use serde::{Deserialize, Serialize};

use super::{ConvParams, Tensor4};
use crate::error::{Error, Result};

/// Inference-mode batch-norm statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    #[serde(default = "default_eps")]
    pub epsilon: f32,
}

fn default_eps() -> f32 {
    1e-5
}

impl BnParams {
    /// gamma = 1, beta = 0, mean = 0, var = 1.
    pub fn identity(channels: usize, epsilon: f32) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (name, v) in [
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if v.len() != c {
                return Err(Error::param("batchnorm", format!("`{name}` has {} entries, gamma has {c}", v.len())));
            }
        }
        for (i, v) in self.running_var.iter().enumerate() {
            if !(*v as f64 + self.epsilon as f64 > 0.0) {
                return Err(Error::param("batchnorm", format!("channel {i}: running_var + epsilon must be > 0")));
            }
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` such that `bn(x) = scale * x + shift`.
    pub fn affine(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok((0..self.channels())
            .map(|c| {
                let scale = self.gamma[c] as f64 / (self.running_var[c] as f64 + self.epsilon as f64).sqrt();
                (scale, self.beta[c] as f64 - self.running_mean[c] as f64 * scale)
            })
            .collect())
    }
}

pub fn batchnorm_forward(input: &Tensor4, bn: &BnParams) -> Result<Tensor4> {
    if bn.channels() != input.channels() {
        return Err(Error::Shape {
            op: "batchnorm",
            dim: "channels",
            expected: bn.channels(),
            found: input.channels(),
        });
    }
    let affine = bn.affine()?;
    Tensor4::from_fn(input.dims(), |n, c, y, x| {
        let (s, t) = affine[c];
        (s * input.at(n, c, y, x) as f64 + t) as f32
    })
}

/// Folds `bn` into the preceding convolution.
pub fn fold_batchnorm(conv: &ConvParams, bn: &BnParams) -> Result<ConvParams> {
    conv.validate()?;
    if bn.channels() != conv.out_ch {
        return Err(Error::Shape {
            op: "fold_batchnorm",
            dim: "out_ch",
            expected: conv.out_ch,
            found: bn.channels(),
        });
    }
    let affine = bn.affine()?;
    let per_out = conv.in_per_group() * conv.kh * conv.kw;
    let mut folded = conv.clone();
    for (o, (scale, _)) in affine.iter().enumerate() {
        for w in &mut folded.weights[o * per_out..(o + 1) * per_out] {
            *w = (*w as f64 * scale) as f32;
        }
        let mean = bn.running_mean[o] as f64;
        folded.bias[o] = ((conv.bias[o] as f64 - mean) * scale + bn.beta[o] as f64) as f32;
    }
    Ok(folded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_with(w: Vec<f32>, b: f32) -> ConvParams {
        let mut c = ConvParams::zeros(1, 1, 3, 1, 1);
        c.weights = w;
        c.bias = vec![b];
        c
    }

    #[test]
    fn identity_bn_is_noop() {
        let conv = conv_with((0..9).map(|i| i as f32 * 0.5 - 1.0).collect(), 0.25);
        let folded = fold_batchnorm(&conv, &BnParams::identity(1, 0.0)).unwrap();
        assert_eq!(folded, conv);
    }

    #[test]
    fn closed_form_scale_and_shift() {
        let w: Vec<f32> = (0..9).map(|i| i as f32 - 4.0).collect();
        let conv = conv_with(w.clone(), 1.5);
        let bn = BnParams {
            gamma: vec![2.0],
            beta: vec![3.0],
            running_mean: vec![0.0],
            running_var: vec![1.0],
            epsilon: 0.0,
        };
        let folded = fold_batchnorm(&conv, &bn).unwrap();
        let expected: Vec<f32> = w.iter().map(|v| 2.0 * v).collect();
        assert_eq!(folded.weights, expected);
        assert_eq!(folded.bias, vec![2.0 * 1.5 + 3.0]);
    }

    #[test]
    fn non_positive_variance_rejected() {
        let conv = conv_with(vec![0.0; 9], 0.0);
        let mut bn = BnParams::identity(1, 0.0);
        bn.running_var[0] = 0.0;
        assert!(fold_batchnorm(&conv, &bn).is_err());
        bn.running_var[0] = -1.0;
        bn.epsilon = 0.5;
        assert!(fold_batchnorm(&conv, &bn).is_err());
    }

    #[test]
    fn channel_count_mismatch() {
        let conv = conv_with(vec![0.0; 9], 0.0);
        assert!(fold_batchnorm(&conv, &BnParams::identity(2, 1e-5)).is_err());
    }
}
