//! Genome → [`OpGraph`] lowering.
//!
//! Block templates (one "repeat" = one bottleneck):
//!
//! * `conv_bn_act`: `depth` k×k convs, the first carries the stride.
//! * `focus`: space-to-depth, then one k×k conv from `4·in` channels.
//! * `spp`: 1×1 to `h = in·r`, max-pools 5/9/13 on it, concat of the four, 1×1 to `out`.
//! * `res` (ResNet-style, per repeat with `cin`, stride `s`, `h = out·r`):
//!   1×1 `cin→h`, k×k `h→out` with stride `s`; when `s == 1` a residual add
//!   closes the repeat, preceded by a 1×1 projection of the shortcut if `cin != out`.
//! * `csp`: k×k stride-2 entry conv (or a 1×1 projection when stride 1 and the
//!   width changes), two 1×1 splits to `h = out·r`, `depth` residual
//!   (1×1, k×k, add) bottlenecks on the second split, concat, 1×1 to `out`.
//! * `mob` (inverted residual, per repeat, `h = cin·r`): 1×1 expand, depthwise
//!   k×k with stride, 1×1 linear project, add when stride 1 and `cin == out`.
//!
//! The neck is a RepGFPN: top-down nodes at strides 32, 16, 8 then bottom-up
//! nodes at 16 and 32, each a fusion block over a concat of its inputs.

use super::genome::{BlockKind, BlockSpec, DetectorGenome, FusionStyle, NeckConfig};
use super::graph::{Act, GraphBuilder, OpGraph, Section, Shape, Tap};
use crate::error::Result;

/// How re-parameterizable 3×3 convs are lowered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepMode {
    /// Deploy form: one 3×3 conv.
    #[default]
    Fused,
    /// Training form: 3×3 + 1×1 (+ identity BN) branches summed.
    Branched,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub rep_mode: RepMode,
}

pub fn build_graph(genome: &DetectorGenome) -> Result<OpGraph> {
    build_graph_with(genome, &BuildOptions::default())
}

pub fn build_graph_with(genome: &DetectorGenome, opts: &BuildOptions) -> Result<OpGraph> {
    genome.validate()?;
    let mut lw = Lowering { b: GraphBuilder::new(), opts: *opts };
    let [h, w] = genome.input_res;
    let mut x = lw.b.input("input", Shape::new(genome.backbone[0].in_ch, h, w));

    lw.b.set_section(Section::Backbone);
    let mut stage_out = Vec::with_capacity(genome.backbone.len());
    for (i, block) in genome.backbone.iter().enumerate() {
        x = lw.block(&format!("backbone.{i}"), x, block)?;
        stage_out.push(x);
    }

    let mut taps = Vec::new();
    let pyramid = genome.pyramid_indices().map(|idx| idx.map(|i| stage_out[i]));
    match pyramid {
        Some(p) => {
            for (node, stride) in p.iter().zip([8, 16, 32]) {
                taps.push(Tap {
                    name: format!("backbone.s{stride}"),
                    node: *node,
                });
            }
        }
        None => {
            // No full pyramid: score the last block of every stride level.
            let strides = genome.cumulative_strides();
            for (i, s) in strides.iter().enumerate() {
                if strides.get(i + 1) != Some(s) {
                    taps.push(Tap {
                        name: format!("backbone.s{s}"),
                        node: stage_out[i],
                    });
                }
            }
        }
    }

    let mut features = pyramid.map(|p| p.to_vec()).unwrap_or_else(|| vec![x]);
    if let Some(neck) = &genome.neck {
        lw.b.set_section(Section::Neck);
        let p = pyramid.expect("validated genome with a neck has a pyramid");
        let outs = lw.neck(neck, p)?;
        for (node, stride) in outs.iter().zip([8, 16, 32]) {
            taps.push(Tap {
                name: format!("neck.s{stride}"),
                node: *node,
            });
        }
        features = outs.to_vec();
    }

    let outputs = match &genome.head {
        Some(head) => {
            lw.b.set_section(Section::Head);
            let mut outs = Vec::new();
            for (f, stride) in features.iter().zip([8, 16, 32]) {
                let prefix = format!("head.s{stride}");
                let mut y = *f;
                let c = lw.b.shape(y).c;
                for d in 0..head.head_depth {
                    y = lw.b.conv(format!("{prefix}.stem{d}"), y, c, 3, 1, 1, Act::Silu)?;
                }
                outs.push(lw.b.conv(format!("{prefix}.cls"), y, genome.num_classes, 1, 1, 1, Act::Identity)?);
                outs.push(lw.b.conv(format!("{prefix}.reg"), y, 4 * head.reg_bins, 1, 1, 1, Act::Identity)?);
            }
            outs
        }
        None => features,
    };
    lw.b.finish(outputs, taps)
}

struct Lowering {
    b: GraphBuilder,
    opts: BuildOptions,
}

fn scaled(base: usize, ratio: f64) -> usize {
    ((base as f64 * ratio).floor() as usize).max(1)
}

impl Lowering {
    fn block(&mut self, name: &str, x: usize, spec: &BlockSpec) -> Result<usize> {
        let k = spec.kernel;
        let ratio = spec.hidden_ratio();
        let b = &mut self.b;
        match spec.kind {
            BlockKind::ConvBnAct => {
                let mut y = x;
                for d in 0..spec.depth {
                    let s = if d == 0 { spec.stride } else { 1 };
                    y = b.conv(format!("{name}.conv{d}"), y, spec.out_ch, k, s, 1, Act::Silu)?;
                }
                Ok(y)
            }
            BlockKind::Focus => {
                let y = b.space_to_depth(format!("{name}.slice"), x)?;
                b.conv(format!("{name}.conv"), y, spec.out_ch, k, 1, 1, Act::Silu)
            }
            BlockKind::Spp => {
                let hidden = scaled(spec.in_ch, ratio);
                let y = b.conv(format!("{name}.reduce"), x, hidden, 1, 1, 1, Act::Silu)?;
                let mut parts = vec![y];
                for pk in [5, 9, 13] {
                    parts.push(b.max_pool(format!("{name}.pool{pk}"), y, pk));
                }
                let cat = b.concat(format!("{name}.cat"), parts)?;
                b.conv(format!("{name}.expand"), cat, spec.out_ch, 1, 1, 1, Act::Silu)
            }
            BlockKind::Res => {
                let hidden = scaled(spec.out_ch, ratio);
                let mut y = x;
                for d in 0..spec.depth {
                    let p = format!("{name}.rep{d}");
                    let s = if d == 0 { spec.stride } else { 1 };
                    let cin = b.shape(y).c;
                    let t = b.conv(format!("{p}.conv1"), y, hidden, 1, 1, 1, Act::Silu)?;
                    if s == 2 {
                        y = b.conv(format!("{p}.conv2"), t, spec.out_ch, k, 2, 1, Act::Silu)?;
                        continue;
                    }
                    let t = b.conv(format!("{p}.conv2"), t, spec.out_ch, k, 1, 1, Act::Identity)?;
                    let shortcut = if cin != spec.out_ch {
                        b.conv(format!("{p}.proj"), y, spec.out_ch, 1, 1, 1, Act::Identity)?
                    } else {
                        y
                    };
                    y = b.add(format!("{p}.add"), vec![t, shortcut], Act::Silu)?;
                }
                Ok(y)
            }
            BlockKind::Csp => {
                let mut y = if spec.stride == 2 {
                    b.conv(format!("{name}.down"), x, spec.out_ch, k, 2, 1, Act::Silu)?
                } else if spec.in_ch != spec.out_ch {
                    b.conv(format!("{name}.proj"), x, spec.out_ch, 1, 1, 1, Act::Silu)?
                } else {
                    x
                };
                let hidden = scaled(spec.out_ch, ratio);
                let left = b.conv(format!("{name}.split0"), y, hidden, 1, 1, 1, Act::Silu)?;
                y = b.conv(format!("{name}.split1"), y, hidden, 1, 1, 1, Act::Silu)?;
                for d in 0..spec.depth {
                    let p = format!("{name}.rep{d}");
                    let t = b.conv(format!("{p}.conv1"), y, hidden, 1, 1, 1, Act::Silu)?;
                    let t = b.conv(format!("{p}.conv2"), t, hidden, k, 1, 1, Act::Identity)?;
                    y = b.add(format!("{p}.add"), vec![t, y], Act::Silu)?;
                }
                let cat = b.concat(format!("{name}.cat"), vec![left, y])?;
                b.conv(format!("{name}.merge"), cat, spec.out_ch, 1, 1, 1, Act::Silu)
            }
            BlockKind::Mob => {
                let mut y = x;
                for d in 0..spec.depth {
                    let p = format!("{name}.rep{d}");
                    let s = if d == 0 { spec.stride } else { 1 };
                    let cin = b.shape(y).c;
                    let hidden = scaled(cin, ratio);
                    let t = b.conv(format!("{p}.expand"), y, hidden, 1, 1, 1, Act::Relu)?;
                    let t = b.conv(format!("{p}.dw"), t, hidden, k, s, hidden, Act::Relu)?;
                    let t = b.conv(format!("{p}.project"), t, spec.out_ch, 1, 1, 1, Act::Identity)?;
                    y = if s == 1 && cin == spec.out_ch {
                        b.add(format!("{p}.add"), vec![t, y], Act::Identity)?
                    } else {
                        t
                    };
                }
                Ok(y)
            }
        }
    }

    /// 3×3 conv that is re-parameterizable: branched or fused per options.
    fn rep_conv(&mut self, name: &str, x: usize, out_ch: usize) -> Result<usize> {
        let b = &mut self.b;
        match self.opts.rep_mode {
            RepMode::Fused => b.conv(format!("{name}.fused"), x, out_ch, 3, 1, 1, Act::Silu),
            RepMode::Branched => {
                let c3 = b.conv(format!("{name}.k3"), x, out_ch, 3, 1, 1, Act::Identity)?;
                let c1 = b.conv(format!("{name}.k1"), x, out_ch, 1, 1, 1, Act::Identity)?;
                let mut branches = vec![c3, c1];
                if b.shape(x).c == out_ch {
                    branches.push(b.batch_norm(format!("{name}.id"), x));
                }
                b.add(format!("{name}.sum"), branches, Act::Silu)
            }
        }
    }

    fn fusion(&mut self, name: &str, inputs: Vec<usize>, out_ch: usize, neck: &NeckConfig) -> Result<usize> {
        let x = if inputs.len() == 1 {
            inputs[0]
        } else {
            self.b.concat(format!("{name}.cat_in"), inputs)?
        };
        if neck.fusion_style == FusionStyle::Conv {
            let mut y = x;
            for d in 0..neck.depth {
                y = self.b.conv(format!("{name}.conv{d}"), y, out_ch, 3, 1, 1, Act::Silu)?;
            }
            return Ok(y);
        }
        let first = out_ch / 2;
        let mid = out_ch - first;
        let hidden = scaled(mid, neck.hidden_ratio);
        let left = self.b.conv(format!("{name}.split0"), x, first.max(1), 1, 1, 1, Act::Silu)?;
        let mut y = self.b.conv(format!("{name}.split1"), x, mid, 1, 1, 1, Act::Silu)?;
        let mut gathered = vec![left];
        for d in 0..neck.depth {
            let p = format!("{name}.rep{d}");
            let t = match neck.fusion_style {
                FusionStyle::Csp => self.b.conv(format!("{p}.conv_a"), y, hidden, 3, 1, 1, Act::Silu)?,
                _ => self.rep_conv(&format!("{p}.rep"), y, hidden)?,
            };
            let t = self.b.conv(format!("{p}.conv_b"), t, mid, 3, 1, 1, Act::Silu)?;
            y = self.b.add(format!("{p}.add"), vec![y, t], Act::Identity)?;
            if neck.fusion_style == FusionStyle::CspReparamElan {
                gathered.push(y);
            }
        }
        if neck.fusion_style != FusionStyle::CspReparamElan {
            gathered.push(y);
        }
        let cat = self.b.concat(format!("{name}.cat_out"), gathered)?;
        self.b.conv(format!("{name}.merge"), cat, out_ch, 1, 1, 1, Act::Silu)
    }

    fn neck(&mut self, neck: &NeckConfig, p: [usize; 3]) -> Result<[usize; 3]> {
        let [p3, p4, p5] = p;
        let [w8, w16, w32] = neck.widths;

        let mut in_x3 = vec![p5];
        if neck.extra_downsample {
            let c = self.b.shape(p4).c;
            in_x3.push(self.b.conv("neck.down_p4_x3", p4, c, 3, 2, 1, Act::Silu)?);
        }
        let x3 = self.fusion("neck.td32", in_x3, w32, neck)?;

        let mut in_x4 = vec![p4];
        if neck.extra_downsample {
            let c = self.b.shape(p3).c;
            in_x4.push(self.b.conv("neck.down_p3_x4", p3, c, 3, 2, 1, Act::Silu)?);
        }
        in_x4.push(self.b.upsample("neck.up_x3_x4", x3, 2));
        let x4 = self.fusion("neck.td16", in_x4, w16, neck)?;

        let mut in_x5 = vec![p3, self.b.upsample("neck.up_x4_x5", x4, 2)];
        if neck.extra_upsample {
            in_x5.push(self.b.upsample("neck.up_p4_x5", p4, 2));
        }
        let x5 = self.fusion("neck.out8", in_x5, w8, neck)?;

        let mut in_x7 = vec![x4, self.b.conv("neck.down_x5_x7", x5, w8, 3, 2, 1, Act::Silu)?];
        if neck.extra_upsample {
            in_x7.push(self.b.upsample("neck.up_x3_x7", x3, 2));
        }
        let x7 = self.fusion("neck.out16", in_x7, w16, neck)?;

        let in_x9 = vec![x3, self.b.conv("neck.down_x7_x9", x7, w16, 3, 2, 1, Act::Silu)?];
        let x9 = self.fusion("neck.out32", in_x9, w32, neck)?;
        Ok([x5, x7, x9])
    }
}
