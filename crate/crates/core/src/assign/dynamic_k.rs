use std::cmp::Ordering;

use super::{AssignmentResult, CostMatrix};

/// Upper bound on the number of IoUs summed when sizing k.
pub const MAX_TOP_Q: usize = 10;

/// `clamp(round(Σ top-q IoU), 1, q)` with `q = min(10, |candidates|)`;
/// 0 when there are no candidates.
pub fn dynamic_k(candidate_ious: &[f64]) -> usize {
    let q = candidate_ious.len().min(MAX_TOP_Q);
    if q == 0 {
        return 0;
    }
    let mut ious = candidate_ious.to_vec();
    ious.sort_by(|a, b| b.total_cmp(a));
    let sum: f64 = ious[..q].iter().sum();
    (sum.round() as usize).clamp(1, q)
}

/// Each GT claims its k cheapest candidates (ties to the lower prediction
/// index); a prediction claimed twice stays with the cheaper GT (ties to the
/// lower GT index), and the other GT goes without it.
pub fn dynamic_k_assign(m: &CostMatrix) -> AssignmentResult {
    let (n_gt, n_pred) = (m.num_gts(), m.num_preds());
    let mut out = AssignmentResult::background(n_gt, n_pred);
    let mut claim: Vec<Option<usize>> = vec![None; n_pred];

    for g in 0..n_gt {
        let mut cands: Vec<usize> = (0..n_pred).filter(|p| m.candidate_mask[g][*p]).collect();
        if cands.is_empty() {
            out.empty_gts.push(g);
            continue;
        }
        let ious: Vec<f64> = cands.iter().map(|p| m.alphas[g][*p]).collect();
        let k = dynamic_k(&ious);
        out.per_gt_k[g] = k;
        cands.sort_by(|a, b| m.costs[g][*a].total_cmp(&m.costs[g][*b]).then(a.cmp(b)));
        for &p in &cands[..k] {
            let better = match claim[p] {
                None => true,
                Some(h) => m.costs[g][p].total_cmp(&m.costs[h][p]).then(g.cmp(&h)) == Ordering::Less,
            };
            if better {
                claim[p] = Some(g);
            }
        }
    }
    for (p, g) in claim.into_iter().enumerate() {
        if let Some(g) = g {
            out.assigned_gt[p] = Some(g);
            out.soft_labels[p] = Some(m.alphas[g][p]);
            out.costs[p] = Some(m.costs[g][p]);
        }
    }
    out
}
