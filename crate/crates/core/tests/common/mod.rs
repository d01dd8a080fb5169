#![allow(dead_code)]

use detkit::arch::{ConvBn, RepBranchParams};
use detkit::assign::{CostMatrix, GroundTruth, Prediction};
use detkit::geometry::BBox;
use detkit::tensor::{BnParams, ConvParams, Tensor4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Cross-correlation written straight from the definition: explicit zero
/// padding first, then one loop per output element.
pub fn naive_conv(x: &Tensor4, p: &ConvParams) -> Tensor4 {
    let [n, c, h, w] = x.dims();
    let (ph, pw) = (h + 2 * p.padding, w + 2 * p.padding);
    let mut padded = vec![0.0f64; n * c * ph * pw];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    padded[((b * c + ch) * ph + y + p.padding) * pw + xx + p.padding] = x.at(b, ch, y, xx) as f64;
                }
            }
        }
    }
    let ho = (ph - p.kh) / p.stride + 1;
    let wo = (pw - p.kw) / p.stride + 1;
    let ipg = p.in_ch / p.groups;
    let opg = p.out_ch / p.groups;
    let mut out = Vec::with_capacity(n * p.out_ch * ho * wo);
    for b in 0..n {
        for o in 0..p.out_ch {
            let g = o / opg;
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = p.bias[o] as f64;
                    for i in 0..ipg {
                        for ky in 0..p.kh {
                            for kx in 0..p.kw {
                                let wv = p.weights[((o * ipg + i) * p.kh + ky) * p.kw + kx] as f64;
                                let iy = y * p.stride + ky;
                                let ix = xx * p.stride + kx;
                                acc += wv * padded[((b * c + g * ipg + i) * ph + iy) * pw + ix];
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    Tensor4::new([n, p.out_ch, ho, wo], out).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn random_conv(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, k: usize, stride: usize, groups: usize) -> ConvParams {
    let mut p = ConvParams::zeros(in_ch, out_ch, k, stride, groups);
    for w in &mut p.weights {
        *w = rng.gen_range(-1.0..1.0);
    }
    for b in &mut p.bias {
        *b = rng.gen_range(-0.5..0.5);
    }
    p
}

pub fn random_bn(rng: &mut ChaCha8Rng, c: usize) -> BnParams {
    BnParams {
        gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        running_mean: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        running_var: (0..c).map(|_| rng.gen_range(0.5..2.0)).collect(),
        epsilon: 1e-5,
    }
}

/// Random multi-branch block plus a matching input.
pub fn random_rep_case(rng: &mut ChaCha8Rng) -> (RepBranchParams, Tensor4) {
    let with_identity = rng.gen_bool(0.5);
    let depthwise = rng.gen_bool(0.25);
    let c_in = rng.gen_range(1..=4);
    let c_out = if with_identity || depthwise { c_in } else { rng.gen_range(1..=4) };
    let groups = if depthwise { c_in } else { 1 };
    let stride = if with_identity { 1 } else { rng.gen_range(1..=2) };
    let mut conv1 = random_conv(rng, c_in, c_out, 1, stride, groups);
    conv1.padding = 0;
    let params = RepBranchParams {
        conv3: ConvBn {
            conv: random_conv(rng, c_in, c_out, 3, stride, groups),
            bn: random_bn(rng, c_out),
        },
        conv1: ConvBn {
            conv: conv1,
            bn: random_bn(rng, c_out),
        },
        identity_bn: with_identity.then(|| random_bn(rng, c_out)),
    };
    let h = rng.gen_range(3..=8);
    let w = rng.gen_range(3..=8);
    let n = rng.gen_range(1..=2);
    let x = random_tensor(rng, [n, c_in, h, w]);
    (params, x)
}

/// Random small image: up to `max_preds` predictions and `max_gts` GTs on a
/// 16×16 canvas with integer-ish coordinates, so IoU ties and zero-IoU pairs occur.
pub fn random_instance(rng: &mut ChaCha8Rng, max_preds: usize, max_gts: usize) -> (Vec<GroundTruth>, Vec<Prediction>) {
    let classes = 3;
    let bbox = |rng: &mut ChaCha8Rng| {
        let x1 = rng.gen_range(0..12) as f64 + rng.gen_range(0.0..0.5);
        let y1 = rng.gen_range(0..12) as f64 + rng.gen_range(0.0..0.5);
        BBox::new(x1, y1, x1 + rng.gen_range(1.0..5.0), y1 + rng.gen_range(1.0..5.0))
    };
    let n_gt = rng.gen_range(0..=max_gts);
    let n_pred = rng.gen_range(0..=max_preds);
    let gts = (0..n_gt)
        .map(|_| GroundTruth {
            bbox: bbox(rng),
            class_id: rng.gen_range(0..classes),
        })
        .collect();
    let preds = (0..n_pred)
        .map(|_| {
            let b = bbox(rng);
            let (cx, cy) = b.center();
            Prediction {
                bbox: b,
                cls_scores: (0..classes).map(|_| rng.gen_range(0.0..=1.0)).collect(),
                anchor_point: [cx, cy],
            }
        })
        .collect();
    (gts, preds)
}

/// Dynamic-k assignment written from the rules, independently of the library:
/// selection by repeated minimum scans instead of sorting, and conflicts
/// settled by a second pass over all GTs per prediction.
pub fn naive_assign(m: &CostMatrix) -> Vec<Option<usize>> {
    let n_gt = m.costs.len();
    let n_pred = if n_gt == 0 { 0 } else { m.costs[0].len() };
    let mut chosen = vec![vec![false; n_pred]; n_gt];
    for g in 0..n_gt {
        let cands: Vec<usize> = (0..n_pred).filter(|&p| m.candidate_mask[g][p]).collect();
        if cands.is_empty() {
            continue;
        }
        let q = cands.len().min(10);
        let mut taken = vec![false; n_pred];
        let mut iou_sum = 0.0;
        for _ in 0..q {
            let mut best: Option<usize> = None;
            for &p in &cands {
                if taken[p] {
                    continue;
                }
                if best.map_or(true, |b| m.alphas[g][p] > m.alphas[g][b]) {
                    best = Some(p);
                }
            }
            let b = best.unwrap();
            taken[b] = true;
            iou_sum += m.alphas[g][b];
        }
        let k = (iou_sum.round() as usize).max(1).min(q);
        let mut picked = vec![false; n_pred];
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for &p in &cands {
                if picked[p] {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => m.costs[g][p] < m.costs[g][b] || (m.costs[g][p] == m.costs[g][b] && p < b),
                };
                if better {
                    best = Some(p);
                }
            }
            picked[best.unwrap()] = true;
        }
        chosen[g] = picked;
    }
    (0..n_pred)
        .map(|p| {
            let mut owner: Option<usize> = None;
            for g in 0..n_gt {
                if !chosen[g][p] {
                    continue;
                }
                owner = match owner {
                    None => Some(g),
                    Some(h) if m.costs[g][p] < m.costs[h][p] => Some(g),
                    keep => keep,
                };
            }
            owner
        })
        .collect()
}
