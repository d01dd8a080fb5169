//! Genome mutation operators.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{BlockKind, DetectorGenome};

/// Which mutation families the search may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationSet {
    pub widen: bool,
    pub narrow: bool,
    pub deepen: bool,
    pub shallow: bool,
    pub swap_kind: bool,
    pub neck_width: bool,
    pub neck_depth: bool,
}

impl Default for MutationSet {
    fn default() -> Self {
        Self::all()
    }
}

impl MutationSet {
    pub const fn all() -> Self {
        Self {
            widen: true,
            narrow: true,
            deepen: true,
            shallow: true,
            swap_kind: true,
            neck_width: true,
            neck_depth: true,
        }
    }

    pub const fn none() -> Self {
        Self {
            widen: false,
            narrow: false,
            deepen: false,
            shallow: false,
            swap_kind: false,
            neck_width: false,
            neck_depth: false,
        }
    }

    pub const fn width_only() -> Self {
        Self {
            widen: true,
            ..Self::none()
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::none()
    }
}

/// Bounds and rules of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Channel step; every width mutation moves by a multiple of it.
    pub width_step: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub max_depth: usize,
    pub max_neck_depth: usize,
    /// Restrict kind swaps to Res on small genomes and Csp on large ones.
    pub scale_rule: bool,
    /// Total searchable repeats at or above which a genome counts as large.
    pub large_depth: usize,
    /// Widest backbone stage at or above which a genome counts as large.
    pub large_width: usize,
    pub mutations: MutationSet,
    /// Resampling attempts before a mutation degrades to a no-op.
    pub max_retries: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            width_step: 8,
            min_width: 8,
            max_width: 1024,
            max_depth: 8,
            max_neck_depth: 6,
            scale_rule: true,
            large_depth: 13,
            large_width: 1024,
            mutations: MutationSet::all(),
            max_retries: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleClass {
    Small,
    Large,
}

impl SearchSpace {
    pub fn scale_class(&self, genome: &DetectorGenome) -> ScaleClass {
        let searchable = genome.backbone.iter().filter(|b| b.kind.is_searchable());
        let depth: usize = searchable.clone().map(|b| b.depth).sum();
        let width = searchable.map(|b| b.out_ch).max().unwrap_or(0);
        if depth >= self.large_depth || width >= self.large_width {
            ScaleClass::Large
        } else {
            ScaleClass::Small
        }
    }

    /// Kinds a searchable block may be swapped to.
    pub fn allowed_kinds(&self, genome: &DetectorGenome) -> Vec<BlockKind> {
        if !self.scale_rule {
            return vec![BlockKind::Mob, BlockKind::Res, BlockKind::Csp];
        }
        match self.scale_class(genome) {
            ScaleClass::Small => vec![BlockKind::Res],
            ScaleClass::Large => vec![BlockKind::Csp],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Mutation {
    /// Change `backbone[block].out_ch` by `delta` channels.
    Width { block: usize, delta: isize },
    Depth { block: usize, delta: isize },
    SwapKind { block: usize, kind: BlockKind },
    NeckWidth { level: usize, delta: isize },
    NeckDepth { delta: isize },
}

fn shifted(v: usize, delta: isize) -> Option<usize> {
    v.checked_add_signed(delta)
}

/// Applies one mutation, repairs channel chaining and re-validates.
/// Returns `None` when the result leaves the space or fails validation.
pub fn apply_mutation(genome: &DetectorGenome, m: Mutation, space: &SearchSpace) -> Option<DetectorGenome> {
    let mut g = genome.clone();
    let width_ok = |w: usize| w >= space.min_width && w <= space.max_width;
    match m {
        Mutation::Width { block, delta } => {
            if delta == 0 || delta.unsigned_abs() % space.width_step != 0 {
                return None;
            }
            let b = g.backbone.get_mut(block)?;
            let w = shifted(b.out_ch, delta).filter(|w| width_ok(*w))?;
            b.out_ch = w;
        }
        Mutation::Depth { block, delta } => {
            let b = g.backbone.get_mut(block)?;
            if !b.kind.is_searchable() && b.kind != BlockKind::ConvBnAct {
                return None;
            }
            let d = shifted(b.depth, delta).filter(|d| *d >= 1 && *d <= space.max_depth)?;
            if d == b.depth {
                return None;
            }
            b.depth = d;
        }
        Mutation::SwapKind { block, kind } => {
            if !space.allowed_kinds(genome).contains(&kind) {
                return None;
            }
            let b = g.backbone.get_mut(block)?;
            if !b.kind.is_searchable() || b.kind == kind {
                return None;
            }
            b.kind = kind;
            b.hidden_ratio = None;
        }
        Mutation::NeckWidth { level, delta } => {
            if delta == 0 || delta.unsigned_abs() % space.width_step != 0 {
                return None;
            }
            let neck = g.neck.as_mut()?;
            let w = neck.widths.get_mut(level)?;
            *w = shifted(*w, delta).filter(|w| width_ok(*w))?;
        }
        Mutation::NeckDepth { delta } => {
            let neck = g.neck.as_mut()?;
            let d = shifted(neck.depth, delta).filter(|d| *d >= 1 && *d <= space.max_neck_depth)?;
            if d == neck.depth {
                return None;
            }
            neck.depth = d;
        }
    }
    g.repair_channels();
    g.validate().ok()?;
    Some(g)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Widen,
    Narrow,
    Deepen,
    Shallow,
    Swap,
    NeckWidth,
    NeckDepth,
}

/// Draws one candidate mutation from the enabled families. It may still be
/// rejected by [`apply_mutation`].
pub fn sample_mutation<R: Rng + ?Sized>(genome: &DetectorGenome, space: &SearchSpace, rng: &mut R) -> Option<Mutation> {
    let set = space.mutations;
    let mut families = Vec::new();
    for (on, f) in [
        (set.widen, Family::Widen),
        (set.narrow, Family::Narrow),
        (set.deepen, Family::Deepen),
        (set.shallow, Family::Shallow),
        (set.swap_kind, Family::Swap),
        (set.neck_width && genome.neck.is_some(), Family::NeckWidth),
        (set.neck_depth && genome.neck.is_some(), Family::NeckDepth),
    ] {
        if on {
            families.push(f);
        }
    }
    let family = *families.choose(rng)?;
    let step = space.width_step as isize;
    let blocks = genome.backbone.len();
    Some(match family {
        Family::Widen => Mutation::Width {
            block: rng.gen_range(0..blocks),
            delta: step,
        },
        Family::Narrow => Mutation::Width {
            block: rng.gen_range(0..blocks),
            delta: -step,
        },
        Family::Deepen => Mutation::Depth {
            block: rng.gen_range(0..blocks),
            delta: 1,
        },
        Family::Shallow => Mutation::Depth {
            block: rng.gen_range(0..blocks),
            delta: -1,
        },
        Family::Swap => Mutation::SwapKind {
            block: rng.gen_range(0..blocks),
            kind: *space.allowed_kinds(genome).choose(rng)?,
        },
        Family::NeckWidth => Mutation::NeckWidth {
            level: rng.gen_range(0..3),
            delta: if rng.gen_bool(0.5) { step } else { -step },
        },
        Family::NeckDepth => Mutation::NeckDepth {
            delta: if rng.gen_bool(0.5) { 1 } else { -1 },
        },
    })
}

/// One random mutation with bounded resampling. Returns the genome
/// unchanged (and `None`) when nothing applicable was drawn.
pub fn mutate_traced<R: Rng + ?Sized>(
    genome: &DetectorGenome,
    space: &SearchSpace,
    rng: &mut R,
) -> (DetectorGenome, Option<Mutation>) {
    for _ in 0..space.max_retries.max(1) {
        let Some(m) = sample_mutation(genome, space, rng) else {
            break;
        };
        if let Some(g) = apply_mutation(genome, m, space) {
            return (g, Some(m));
        }
    }
    (genome.clone(), None)
}

pub fn mutate<R: Rng + ?Sized>(genome: &DetectorGenome, space: &SearchSpace, rng: &mut R) -> DetectorGenome {
    mutate_traced(genome, space, rng).0
}
