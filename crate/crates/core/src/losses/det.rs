//! Quality focal, distribution focal and GIoU losses, with closed-form
//! derivatives used to sanity-check the evaluators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Floor applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;
pub const DEFAULT_QFL_BETA: f64 = 2.0;

fn ln_clamped(x: f64) -> f64 {
    x.max(LOG_EPS).ln()
}

fn bce(p: f64, q: f64) -> f64 {
    -q * ln_clamped(p) - (1.0 - q) * ln_clamped(1.0 - p)
}

/// `|q − p|^β · BCE(p; q)`.
pub fn qfl(pred: f64, target: f64, beta: f64) -> f64 {
    (target - pred).abs().powf(beta) * bce(pred, target)
}

/// `∂qfl/∂p = β|q−p|^(β−1)·sign(p−q)·BCE + |q−p|^β·((1−q)/(1−p) − q/p)`, for `p` in (0, 1).
pub fn qfl_grad(pred: f64, target: f64, beta: f64) -> f64 {
    let gap = (target - pred).abs();
    let modulating = if gap == 0.0 {
        0.0
    } else {
        beta * gap.powf(beta - 1.0) * (pred - target).signum()
    };
    modulating * bce(pred, target) + gap.powf(beta) * ((1.0 - target) / (1.0 - pred) - target / pred)
}

fn dfl_check(probs: &[f64], target: f64) -> Result<usize> {
    if probs.len() < 2 {
        return Err(Error::OutOfRange("dfl needs at least two bins".into()));
    }
    if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::OutOfRange(format!("bin probability {i} = {} not in [0, 1]", probs[i])));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::OutOfRange(format!("bin probabilities sum to {sum}, not 1")));
    }
    let top = (probs.len() - 1) as f64;
    if !(0.0..=top).contains(&target) {
        return Err(Error::OutOfRange(format!("dfl target {target} outside [0, {top}]")));
    }
    Ok(target.floor() as usize)
}

/// `−((i+1−y)·ln p_i + (y−i)·ln p_{i+1})` with `i = ⌊y⌋`.
pub fn dfl(probs: &[f64], target: f64) -> Result<f64> {
    let i = dfl_check(probs, target)?;
    let right = target - i as f64;
    if right == 0.0 {
        return Ok(-ln_clamped(probs[i]));
    }
    Ok(-((1.0 - right) * ln_clamped(probs[i]) + right * ln_clamped(probs[i + 1])))
}

/// Partial derivatives of [`dfl`] with respect to each bin probability,
/// treating the bins as free variables: `−w_i / p_i` on the two neighbors.
pub fn dfl_grad(probs: &[f64], target: f64) -> Result<Vec<f64>> {
    let i = dfl_check(probs, target)?;
    let right = target - i as f64;
    let mut g = vec![0.0; probs.len()];
    g[i] = -(1.0 - right) / probs[i];
    if right > 0.0 {
        g[i + 1] = -right / probs[i + 1];
    }
    Ok(g)
}

/// `1 − GIoU`, in [0, 2].
pub fn giou_loss(pred: &BBox, gt: &BBox) -> f64 {
    1.0 - pred.giou(gt)
}

/// Gradient of [`giou_loss`] with respect to `(x1, y1, x2, y2)` of `pred`.
///
/// With `L = 2 − I/U − U/H` (`I` intersection, `U` union, `H` hull area):
/// `∂L = −(U·∂I − I·∂U)/U² − (H·∂U − U·∂H)/H²`, `∂U = ∂A_pred − ∂I`.
/// Valid where no pred edge coincides with a gt edge.
pub fn giou_loss_grad(pred: &BBox, gt: &BBox) -> [f64; 4] {
    let (pw, ph) = (pred.width(), pred.height());
    let iw = (pred.x2.min(gt.x2) - pred.x1.max(gt.x1)).max(0.0);
    let ih = (pred.y2.min(gt.y2) - pred.y1.max(gt.y1)).max(0.0);
    let overlap = iw > 0.0 && ih > 0.0;
    let hw = pred.x2.max(gt.x2) - pred.x1.min(gt.x1);
    let hh = pred.y2.max(gt.y2) - pred.y1.min(gt.y1);
    let i = iw * ih;
    let u = pw * ph + gt.area() - i;
    let h = hw * hh;

    let d_i = if overlap {
        [
            if pred.x1 > gt.x1 { -ih } else { 0.0 },
            if pred.y1 > gt.y1 { -iw } else { 0.0 },
            if pred.x2 < gt.x2 { ih } else { 0.0 },
            if pred.y2 < gt.y2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-ph, -pw, ph, pw];
    let d_h = [
        if pred.x1 < gt.x1 { -hh } else { 0.0 },
        if pred.y1 < gt.y1 { -hw } else { 0.0 },
        if pred.x2 > gt.x2 { hh } else { 0.0 },
        if pred.y2 > gt.y2 { hw } else { 0.0 },
    ];
    let mut g = [0.0; 4];
    for k in 0..4 {
        let d_u = d_area[k] - d_i[k];
        g[k] = -(u * d_i[k] - i * d_u) / (u * u) - (h * d_u - u * d_h[k]) / (h * h);
    }
    g
}

/// Weights of the composite detection loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha_qfl: f64,
    pub beta_dfl: f64,
    pub gamma_giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_qfl: 1.0,
            beta_dfl: 0.25,
            gamma_giou: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha_qfl, self.beta_dfl, self.gamma_giou];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::OutOfRange(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::OutOfRange("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossComponents {
    pub qfl: f64,
    pub dfl: f64,
    pub giou: f64,
}

impl LossComponents {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("qfl", self.qfl), ("dfl", self.dfl), ("giou", self.giou)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::OutOfRange(format!("loss component {name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// `α·qfl + β·dfl + γ·giou`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    c.validate()?;
    w.validate()?;
    Ok(w.alpha_qfl * c.qfl + w.beta_dfl * c.dfl + w.gamma_giou * c.giou)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub qfl: f64,
    pub dfl: f64,
    pub giou: f64,
    pub distill: f64,
    pub weights: LossWeights,
    pub distill_weight: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(c: &LossComponents, w: &LossWeights, distill: f64, distill_weight: f64) -> Result<Self> {
        if !(distill.is_finite() && distill >= 0.0) {
            return Err(Error::OutOfRange(format!("distillation loss {distill} must be finite and >= 0")));
        }
        let total = total_loss(c, w)? + distill * distill_weight;
        Ok(Self {
            qfl: c.qfl,
            dfl: c.dfl,
            giou: c.giou,
            distill,
            weights: *w,
            distill_weight,
            total,
        })
    }
}

/// One matched positive: class quality target plus box regression terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSample {
    pub pred_prob: f64,
    pub target_q: f64,
    #[serde(default)]
    pub bin_probs: Option<Vec<f64>>,
    #[serde(default)]
    pub target_y: Option<f64>,
    #[serde(default)]
    pub pred_box: Option<BBox>,
    #[serde(default)]
    pub gt_box: Option<BBox>,
}

/// Averages each term over the samples that carry it.
pub fn components_from_samples(samples: &[LossSample], beta: f64) -> Result<LossComponents> {
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (i, s) in samples.iter().enumerate() {
        for (name, v) in [("pred_prob", s.pred_prob), ("target_q", s.target_q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Schema {
                    path: format!("samples[{i}].{name}"),
                    msg: format!("{v} not in [0, 1]"),
                });
            }
        }
        sums[0] += qfl(s.pred_prob, s.target_q, beta);
        counts[0] += 1;
        match (&s.bin_probs, s.target_y) {
            (Some(p), Some(y)) => {
                sums[1] += dfl(p, y).map_err(|e| Error::Schema {
                    path: format!("samples[{i}].bin_probs"),
                    msg: e.to_string(),
                })?;
                counts[1] += 1;
            }
            (None, None) => {}
            _ => {
                return Err(Error::Schema {
                    path: format!("samples[{i}]"),
                    msg: "bin_probs and target_y must be given together".into(),
                })
            }
        }
        match (&s.pred_box, &s.gt_box) {
            (Some(p), Some(g)) => {
                for (name, b) in [("pred_box", p), ("gt_box", g)] {
                    b.validate().map_err(|e| Error::Schema {
                        path: format!("samples[{i}].{name}"),
                        msg: e.to_string(),
                    })?;
                }
                sums[2] += giou_loss(p, g);
                counts[2] += 1;
            }
            (None, None) => {}
            _ => {
                return Err(Error::Schema {
                    path: format!("samples[{i}]"),
                    msg: "pred_box and gt_box must be given together".into(),
                })
            }
        }
    }
    let mean = |k: usize| if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 };
    Ok(LossComponents {
        qfl: mean(0),
        dfl: mean(1),
        giou: mean(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qfl_examples() {
        assert_eq!(qfl(0.3, 0.3, 2.0), 0.0);
        let expected = 0.25 * 2f64.ln();
        assert!((qfl(0.5, 1.0, 2.0) - expected).abs() < 1e-12);
        assert!((qfl(0.5, 0.0, 2.0) - expected).abs() < 1e-12);
        assert!((qfl(0.5, 1.0, 2.0) - 0.173287).abs() < 1e-6);
    }

    #[test]
    fn dfl_examples() {
        let mut p = vec![0.0; 5];
        p[2] = 1.0;
        assert_eq!(dfl(&p, 2.0).unwrap(), 0.0);
        let half = [0.0, 0.0, 0.5, 0.5, 0.0];
        assert!((dfl(&half, 2.5).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(dfl(&p, 2.5).unwrap() > 2f64.ln());
        assert!(matches!(dfl(&p, 4.5), Err(Error::OutOfRange(_))));
        assert!(dfl(&[0.5, 0.4], 0.5).is_err());
    }

    #[test]
    fn giou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(giou_loss(&a, &a), 0.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        let expected = 1.0 - (1.0 / 7.0 - 2.0 / 9.0);
        assert!((giou_loss(&a, &b) - expected).abs() < 1e-12);
        assert!((giou_loss(&a, &b) - 1.079365).abs() < 1e-5);
        let left = BBox::new(0.0, 0.0, 1.0, 2.0);
        let right = BBox::new(1.0, 0.0, 2.0, 2.0);
        assert_eq!(left.giou(&right), left.iou(&right));
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w).unwrap(), 0.0);
        let only_q = LossWeights {
            alpha_qfl: 1.0,
            beta_dfl: 0.0,
            gamma_giou: 0.0,
        };
        let c = LossComponents {
            qfl: 0.5,
            ..Default::default()
        };
        assert_eq!(total_loss(&c, &only_q).unwrap(), 0.5);
        let c = LossComponents {
            qfl: 0.2,
            dfl: 0.4,
            giou: 0.3,
        };
        assert!((total_loss(&c, &w).unwrap() - 0.9).abs() < 1e-12);
        let neg = LossComponents {
            dfl: -0.1,
            ..Default::default()
        };
        assert!(total_loss(&neg, &w).is_err());
        let zero = LossWeights {
            alpha_qfl: 0.0,
            beta_dfl: 0.0,
            gamma_giou: 0.0,
        };
        assert!(total_loss(&c, &zero).is_err());
    }

    #[test]
    fn breakdown_adds_weighted_distill() {
        let c = LossComponents {
            qfl: 0.2,
            dfl: 0.4,
            giou: 0.3,
        };
        let b = LossBreakdown::new(&c, &LossWeights::default(), 2.0, 0.25).unwrap();
        assert!((b.total - 1.4).abs() < 1e-12);
    }
}
