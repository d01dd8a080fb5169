use super::{validate_image, AssignmentResult, Assigner, GroundTruth, Prediction};
use crate::error::Result;

/// Single-level adaptive training sample selection: per GT, the `top_k`
/// predictions nearest the box center by anchor point, kept when their IoU
/// reaches mean + std of that set and the anchor lies inside the box.
/// Contested predictions go to the higher-IoU GT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atss {
    pub top_k: usize,
}

impl Default for Atss {
    fn default() -> Self {
        Self { top_k: 9 }
    }
}

impl Assigner for Atss {
    fn assign(&self, gts: &[GroundTruth], preds: &[Prediction]) -> Result<AssignmentResult> {
        validate_image(gts, preds, "")?;
        let mut out = AssignmentResult::background(gts.len(), preds.len());
        let mut best_iou = vec![0.0f64; preds.len()];
        for (g, gt) in gts.iter().enumerate() {
            let (cx, cy) = gt.bbox.center();
            let mut near: Vec<usize> = (0..preds.len()).collect();
            let dist = |p: usize| {
                let [x, y] = preds[p].anchor_point;
                (x - cx).powi(2) + (y - cy).powi(2)
            };
            near.sort_by(|a, b| dist(*a).total_cmp(&dist(*b)).then(a.cmp(b)));
            near.truncate(self.top_k);
            let ious: Vec<f64> = near.iter().map(|p| gt.bbox.iou(&preds[*p].bbox)).collect();
            if ious.is_empty() {
                out.empty_gts.push(g);
                continue;
            }
            let mean = ious.iter().sum::<f64>() / ious.len() as f64;
            let std = (ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ious.len() as f64).sqrt();
            for (&p, &iou) in near.iter().zip(&ious) {
                let [x, y] = preds[p].anchor_point;
                if iou > 0.0 && iou >= mean + std && gt.bbox.contains(x, y) && iou > best_iou[p] {
                    if let Some(prev) = out.assigned_gt[p] {
                        out.per_gt_k[prev] -= 1;
                    }
                    best_iou[p] = iou;
                    out.assigned_gt[p] = Some(g);
                    out.soft_labels[p] = Some(iou);
                    out.per_gt_k[g] += 1;
                }
            }
        }
        Ok(out)
    }
}
