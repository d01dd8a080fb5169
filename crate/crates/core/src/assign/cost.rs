use serde::{Deserialize, Serialize};

use super::{validate_image, GroundTruth, Prediction};
use crate::error::Result;
use crate::geometry::BBox;

/// IoU floor: pairs at or below it are not candidates, and `-ln` is clamped there.
pub const ALPHA_EPS: f64 = 1e-8;
const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostOptions {
    pub eps: f64,
    /// Only predictions whose anchor point lies inside the GT box are candidates.
    pub center_prior: bool,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self {
            eps: ALPHA_EPS,
            center_prior: false,
        }
    }
}

/// Rows are GTs, columns predictions. Masked-out entries hold `+inf` cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub costs: Vec<Vec<f64>>,
    pub alphas: Vec<Vec<f64>>,
    pub candidate_mask: Vec<Vec<bool>>,
}

impl CostMatrix {
    pub fn num_gts(&self) -> usize {
        self.costs.len()
    }

    pub fn num_preds(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    /// Same matrix with every cost multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> CostMatrix {
        let mut out = self.clone();
        for row in &mut out.costs {
            for c in row.iter_mut() {
                *c *= factor;
            }
        }
        out
    }
}

pub fn pairwise_iou(gts: &[BBox], preds: &[BBox]) -> Vec<Vec<f64>> {
    gts.iter().map(|g| preds.iter().map(|p| g.iou(p)).collect()).collect()
}

pub fn reg_cost(alpha: f64) -> f64 {
    -alpha.max(ALPHA_EPS).ln()
}

/// `(α − p)² · BCE(p; α)`.
pub fn cls_cost(alpha: f64, p: f64) -> f64 {
    let bce = -alpha * p.max(LOG_EPS).ln() - (1.0 - alpha) * (1.0 - p).max(LOG_EPS).ln();
    (alpha - p).powi(2) * bce
}

pub fn align_cost(gts: &[GroundTruth], preds: &[Prediction], opts: &CostOptions) -> Result<CostMatrix> {
    validate_image(gts, preds, "")?;
    let n = gts.len();
    let mut m = CostMatrix {
        costs: vec![vec![f64::INFINITY; preds.len()]; n],
        alphas: vec![vec![0.0; preds.len()]; n],
        candidate_mask: vec![vec![false; preds.len()]; n],
    };
    for (i, g) in gts.iter().enumerate() {
        for (j, p) in preds.iter().enumerate() {
            let alpha = g.bbox.iou(&p.bbox);
            m.alphas[i][j] = alpha;
            let inside = !opts.center_prior || g.bbox.contains(p.anchor_point[0], p.anchor_point[1]);
            if alpha > opts.eps && inside {
                m.candidate_mask[i][j] = true;
                m.costs[i][j] = reg_cost(alpha) + cls_cost(alpha, p.cls_scores[g.class_id]);
            }
        }
    }
    Ok(m)
}
