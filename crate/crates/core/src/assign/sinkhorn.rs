use super::{align_cost, dynamic_k, AssignmentResult, Assigner, CostOptions, GroundTruth, Prediction};
use crate::error::Result;

/// Entropic optimal transport over the alignment cost. GT `i` supplies its
/// dynamic k, a background row supplies the remainder at a flat cost, and
/// every prediction demands one unit. Each prediction goes to the row that
/// sends it the most mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOta {
    pub cost: CostOptions,
    pub epsilon: f64,
    pub iterations: usize,
    pub background_cost: f64,
}

impl Default for SinkhornOta {
    fn default() -> Self {
        Self {
            cost: CostOptions::default(),
            epsilon: 0.1,
            iterations: 100,
            background_cost: 3.0,
        }
    }
}

fn logsumexp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Assigner for SinkhornOta {
    fn assign(&self, gts: &[GroundTruth], preds: &[Prediction]) -> Result<AssignmentResult> {
        let m = align_cost(gts, preds, &self.cost)?;
        let (n_gt, n_pred) = (gts.len(), preds.len());
        let mut out = AssignmentResult::background(n_gt, n_pred);
        if n_pred == 0 {
            out.empty_gts = (0..n_gt).collect();
            return Ok(out);
        }
        let mut supply: Vec<f64> = (0..n_gt)
            .map(|g| {
                let ious: Vec<f64> = (0..n_pred).filter(|p| m.candidate_mask[g][*p]).map(|p| m.alphas[g][p]).collect();
                if ious.is_empty() {
                    out.empty_gts.push(g);
                }
                dynamic_k(&ious) as f64
            })
            .collect();
        let fg: f64 = supply.iter().sum();
        supply.push((n_pred as f64 - fg).max(0.0));
        let total: f64 = supply.iter().sum();
        let demand = total / n_pred as f64;

        let rows = n_gt + 1;
        let cost = |r: usize, p: usize| if r == n_gt { self.background_cost } else { m.costs[r][p] };
        let log_k: Vec<Vec<f64>> = (0..rows).map(|r| (0..n_pred).map(|p| -cost(r, p) / self.epsilon).collect()).collect();
        let mut f = vec![0.0; rows];
        let mut g = vec![0.0; n_pred];
        for _ in 0..self.iterations {
            for r in 0..rows {
                f[r] = if supply[r] > 0.0 {
                    supply[r].ln() - logsumexp((0..n_pred).map(|p| log_k[r][p] + g[p]))
                } else {
                    f64::NEG_INFINITY
                };
            }
            for p in 0..n_pred {
                g[p] = demand.ln() - logsumexp((0..rows).map(|r| log_k[r][p] + f[r]));
            }
        }
        for p in 0..n_pred {
            let best = (0..rows)
                .map(|r| (r, log_k[r][p] + f[r] + g[p]))
                .filter(|(_, v)| v.is_finite())
                .fold(None, |acc: Option<(usize, f64)>, (r, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((r, v)),
                });
            if let Some((r, _)) = best {
                if r < n_gt {
                    out.assigned_gt[p] = Some(r);
                    out.soft_labels[p] = Some(m.alphas[r][p]);
                    out.costs[p] = Some(m.costs[r][p]);
                    out.per_gt_k[r] += 1;
                }
            }
        }
        Ok(out)
    }
}
