//! Label assignment: alignment-aware cost and dynamic-k matching.

mod atss;
mod cost;
mod dynamic_k;
mod io;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use atss::Atss;
pub use cost::{align_cost, cls_cost, pairwise_iou, reg_cost, CostMatrix, CostOptions, ALPHA_EPS};
pub use dynamic_k::{dynamic_k, dynamic_k_assign, MAX_TOP_Q};
pub use io::{assign_images, read_assign_input, AssignInput, ImageAssignment, ImageInput};
pub use sinkhorn::SinkhornOta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub cls_scores: Vec<f64>,
    pub anchor_point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// GT index per prediction; `None` is background.
    pub assigned_gt: Vec<Option<usize>>,
    /// Number of predictions each GT was allowed to take.
    pub per_gt_k: Vec<usize>,
    /// IoU target per assigned prediction.
    pub soft_labels: Vec<Option<f64>>,
    /// Assignment cost of each assigned pair.
    pub costs: Vec<Option<f64>>,
    /// GTs that had no candidate prediction at all.
    pub empty_gts: Vec<usize>,
}

impl AssignmentResult {
    pub(crate) fn background(num_gts: usize, num_preds: usize) -> Self {
        Self {
            assigned_gt: vec![None; num_preds],
            per_gt_k: vec![0; num_gts],
            soft_labels: vec![None; num_preds],
            costs: vec![None; num_preds],
            empty_gts: Vec::new(),
        }
    }

    /// Predictions assigned to `gt`, ascending.
    pub fn predictions_of(&self, gt: usize) -> Vec<usize> {
        (0..self.assigned_gt.len()).filter(|p| self.assigned_gt[*p] == Some(gt)).collect()
    }

    pub fn num_positive(&self) -> usize {
        self.assigned_gt.iter().filter(|g| g.is_some()).count()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (g, k) in self.per_gt_k.iter().enumerate() {
            let got = self.predictions_of(g).len();
            if got > *k {
                return Err(Error::Invariant(format!("gt {g} holds {got} predictions but k = {k}")));
            }
        }
        Ok(())
    }
}

/// A label assigner over one image.
pub trait Assigner: Sync {
    fn assign(&self, gts: &[GroundTruth], preds: &[Prediction]) -> Result<AssignmentResult>;
}

/// Alignment-aware cost with simOTA-style dynamic-k selection.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlignOta {
    pub cost: CostOptions,
}

impl Assigner for AlignOta {
    fn assign(&self, gts: &[GroundTruth], preds: &[Prediction]) -> Result<AssignmentResult> {
        let m = align_cost(gts, preds, &self.cost)?;
        if gts.is_empty() {
            // No rows to read the prediction count from.
            return Ok(AssignmentResult::background(0, preds.len()));
        }
        Ok(dynamic_k_assign(&m))
    }
}

/// Checks boxes, score ranges and class ids; `at` prefixes error paths.
pub fn validate_image(gts: &[GroundTruth], preds: &[Prediction], at: &str) -> Result<()> {
    let schema = |path: String, msg: String| Error::Schema { path, msg };
    let num_classes = preds.first().map(|p| p.cls_scores.len());
    for (i, p) in preds.iter().enumerate() {
        let here = format!("{at}predictions[{i}]");
        p.bbox.validate().map_err(|e| schema(format!("{here}.box"), e.to_string()))?;
        if Some(p.cls_scores.len()) != num_classes || p.cls_scores.is_empty() {
            return Err(schema(
                format!("{here}.cls_scores"),
                format!("expected {} class scores, found {}", num_classes.unwrap_or(0).max(1), p.cls_scores.len()),
            ));
        }
        if let Some(c) = p.cls_scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(schema(format!("{here}.cls_scores[{c}]"), format!("{} not in [0, 1]", p.cls_scores[c])));
        }
        if !p.anchor_point.iter().all(|v| v.is_finite()) {
            return Err(schema(format!("{here}.anchor_point"), "must be finite".into()));
        }
    }
    for (i, g) in gts.iter().enumerate() {
        let here = format!("{at}ground_truths[{i}]");
        g.bbox.validate().map_err(|e| schema(format!("{here}.box"), e.to_string()))?;
        if !(g.bbox.area() > 0.0) {
            return Err(schema(format!("{here}.box"), "ground-truth box must have positive area".into()));
        }
        if let Some(n) = num_classes {
            if g.class_id >= n {
                return Err(schema(format!("{here}.class_id"), format!("{} not in [0, {n})", g.class_id)));
            }
        }
    }
    Ok(())
}
