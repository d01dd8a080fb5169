use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::deserialize_with_path;

/// Genome document schema version written by [`genome_to_json`].
pub const GENOME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Mob,
    Res,
    Csp,
    Focus,
    Spp,
    ConvBnAct,
}

impl BlockKind {
    /// Kinds the search may swap between.
    pub fn is_searchable(self) -> bool {
        matches!(self, BlockKind::Mob | BlockKind::Res | BlockKind::Csp)
    }
}

/// One backbone stage. `hidden_ratio` sets internal widths:
/// bottleneck channels as a fraction of `out_ch` for Res/Csp, expansion over
/// the input width for Mob, and the pooled width over `in_ch` for Spp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_ch: usize,
    pub out_ch: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub depth: usize,
    #[serde(default = "three")]
    pub kernel: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_ratio: Option<f64>,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

impl BlockSpec {
    pub fn new(kind: BlockKind, in_ch: usize, out_ch: usize, stride: usize, depth: usize) -> Self {
        Self {
            kind,
            in_ch,
            out_ch,
            stride,
            depth,
            kernel: 3,
            hidden_ratio: None,
        }
    }

    pub fn hidden_ratio(&self) -> f64 {
        self.hidden_ratio.unwrap_or(match self.kind {
            BlockKind::Mob => 4.0,
            _ => 0.5,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStyle {
    /// Stack of plain 3x3 convs.
    Conv,
    /// Cross-stage-partial block with plain bottlenecks.
    Csp,
    /// CSP whose bottleneck opens with a re-parameterizable 3x3.
    CspReparam,
    /// CSP + reparam, concatenating every bottleneck output before the final projection.
    CspReparamElan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckConfig {
    /// Bottleneck repeats inside every fusion block.
    pub depth: usize,
    /// Output channels at strides 8, 16, 32.
    pub widths: [usize; 3],
    #[serde(default = "default_fusion")]
    pub fusion_style: FusionStyle,
    #[serde(default)]
    pub extra_upsample: bool,
    #[serde(default = "yes")]
    pub extra_downsample: bool,
    /// Bottleneck hidden width relative to the CSP branch width.
    #[serde(default = "unit")]
    pub hidden_ratio: f64,
}

fn default_fusion() -> FusionStyle {
    FusionStyle::CspReparamElan
}

fn yes() -> bool {
    true
}

fn unit() -> f64 {
    1.0
}

impl NeckConfig {
    pub fn new(depth: usize, widths: [usize; 3]) -> Self {
        Self {
            depth,
            widths,
            fusion_style: FusionStyle::CspReparamElan,
            extra_upsample: false,
            extra_downsample: true,
            hidden_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    /// Shared 3x3 layers before the projections; 0 is ZeroHead.
    #[serde(default)]
    pub head_depth: usize,
    /// Bins of the per-side regression distribution.
    #[serde(default = "default_bins")]
    pub reg_bins: usize,
}

fn default_bins() -> usize {
    16
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            head_depth: 0,
            reg_bins: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorGenome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub num_classes: usize,
    /// `(height, width)` in pixels.
    pub input_res: [usize; 2],
    pub backbone: Vec<BlockSpec>,
    #[serde(default)]
    pub neck: Option<NeckConfig>,
    #[serde(default)]
    pub head: Option<HeadConfig>,
}

impl DetectorGenome {
    /// Reconstructed small-scale genome. Stage repeats and widths are a
    /// reconstruction calibrated against published totals, not the released model.
    pub fn small_reconstruction() -> Self {
        genome_from_json(include_str!("../../genomes/s_reconstruction.json"))
            .expect("bundled genome is valid")
    }

    /// Reconstructed tiny-scale genome (Res blocks).
    pub fn tiny_reconstruction() -> Self {
        genome_from_json(include_str!("../../genomes/t_reconstruction.json"))
            .expect("bundled genome is valid")
    }

    /// Reconstructed medium-scale genome (CSP blocks).
    pub fn medium_reconstruction() -> Self {
        genome_from_json(include_str!("../../genomes/m_reconstruction.json"))
            .expect("bundled genome is valid")
    }

    /// Cumulative backbone stride after each block.
    pub fn cumulative_strides(&self) -> Vec<usize> {
        let mut s = 1;
        self.backbone
            .iter()
            .map(|b| {
                s *= b.stride;
                s
            })
            .collect()
    }

    /// Index of the last backbone block at strides 8, 16 and 32, if all exist.
    pub fn pyramid_indices(&self) -> Option<[usize; 3]> {
        let strides = self.cumulative_strides();
        let last_at = |target: usize| strides.iter().rposition(|s| *s == target);
        Some([last_at(8)?, last_at(16)?, last_at(32)?])
    }

    /// Rebuilds the channel chain front to back: every block takes its
    /// predecessor's `out_ch` as `in_ch`.
    pub fn repair_channels(&mut self) {
        for i in 1..self.backbone.len() {
            self.backbone[i].in_ch = self.backbone[i - 1].out_ch;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::genome("num_classes", "must be >= 1"));
        }
        if self.input_res[0] == 0 || self.input_res[1] == 0 {
            return Err(Error::genome("input_res", "must be positive"));
        }
        if self.backbone.is_empty() {
            return Err(Error::genome("backbone", "must contain at least one block"));
        }
        for (i, b) in self.backbone.iter().enumerate() {
            let at = |field: &str| format!("backbone[{i}].{field}");
            if b.in_ch == 0 {
                return Err(Error::genome(at("in_ch"), "must be >= 1"));
            }
            if b.out_ch == 0 {
                return Err(Error::genome(at("out_ch"), "must be >= 1"));
            }
            if !(b.stride == 1 || b.stride == 2) {
                return Err(Error::genome(at("stride"), format!("{} not in {{1, 2}}", b.stride)));
            }
            if b.depth == 0 {
                return Err(Error::genome(at("depth"), "must be >= 1"));
            }
            if b.kernel == 0 || b.kernel % 2 == 0 {
                return Err(Error::genome(at("kernel"), format!("{} must be odd and positive", b.kernel)));
            }
            let ratio = b.hidden_ratio();
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(Error::genome(at("hidden_ratio"), "must be a positive finite number"));
            }
            match b.kind {
                BlockKind::Focus if b.stride != 2 || b.depth != 1 => {
                    return Err(Error::genome(at("kind"), "focus requires stride 2 and depth 1"));
                }
                BlockKind::Spp if b.stride != 1 || b.depth != 1 => {
                    return Err(Error::genome(at("kind"), "spp requires stride 1 and depth 1"));
                }
                _ => {}
            }
            if i > 0 && b.in_ch != self.backbone[i - 1].out_ch {
                return Err(Error::genome(
                    at("in_ch"),
                    format!("{} does not chain from predecessor out_ch {}", b.in_ch, self.backbone[i - 1].out_ch),
                ));
            }
        }
        if self.neck.is_some() || self.head.is_some() {
            let strides = self.cumulative_strides();
            if let Some(pos) = strides.iter().position(|s| *s > 32) {
                return Err(Error::genome(format!("backbone[{pos}].stride"), "cumulative stride exceeds 32"));
            }
            if self.pyramid_indices().is_none() {
                return Err(Error::genome("backbone", "must emit feature maps at strides 8, 16 and 32"));
            }
        }
        if let Some(neck) = &self.neck {
            if neck.depth == 0 {
                return Err(Error::genome("neck.depth", "must be >= 1"));
            }
            if let Some(i) = neck.widths.iter().position(|w| *w == 0) {
                return Err(Error::genome(format!("neck.widths[{i}]"), "must be >= 1"));
            }
            if !(neck.hidden_ratio.is_finite() && neck.hidden_ratio > 0.0) {
                return Err(Error::genome("neck.hidden_ratio", "must be a positive finite number"));
            }
        }
        if let Some(head) = &self.head {
            if head.reg_bins == 0 {
                return Err(Error::genome("head.reg_bins", "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct GenomeDocOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    genome: &'a DetectorGenome,
}

/// Serializes with the schema version embedded.
pub fn genome_to_json(genome: &DetectorGenome) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GenomeDocOut {
        schema_version: GENOME_SCHEMA_VERSION,
        genome,
    })?)
}

/// Parses and validates a genome document. Schema errors carry the dotted
/// path of the offending field.
pub fn genome_from_json(text: &str) -> Result<DetectorGenome> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: String::new(),
        msg: e.to_string(),
    })?;
    let obj = value.as_object_mut().ok_or_else(|| Error::Schema {
        path: String::new(),
        msg: "genome document must be a JSON object".into(),
    })?;
    match obj.remove("schema_version") {
        None => {
            return Err(Error::Schema {
                path: "schema_version".into(),
                msg: "missing field".into(),
            })
        }
        Some(v) if v.as_u64() == Some(GENOME_SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::Schema {
                path: "schema_version".into(),
                msg: format!("unsupported version {v}, expected {GENOME_SCHEMA_VERSION}"),
            })
        }
    }
    let genome: DetectorGenome = deserialize_with_path(value)?;
    genome.validate()?;
    Ok(genome)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_genomes_validate() {
        for g in [
            DetectorGenome::small_reconstruction(),
            DetectorGenome::tiny_reconstruction(),
            DetectorGenome::medium_reconstruction(),
        ] {
            g.validate().unwrap();
            assert!(g.pyramid_indices().is_some());
        }
    }

    #[test]
    fn round_trip_small() {
        let g = DetectorGenome::small_reconstruction();
        let text = genome_to_json(&g).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert_eq!(genome_from_json(&text).unwrap(), g);
    }

    #[test]
    fn missing_neck_widths_is_named() {
        let g = DetectorGenome::small_reconstruction();
        let mut v: serde_json::Value = serde_json::from_str(&genome_to_json(&g).unwrap()).unwrap();
        v["neck"].as_object_mut().unwrap().remove("widths");
        let err = genome_from_json(&v.to_string()).unwrap_err();
        match err {
            Error::Schema { path, .. } => assert_eq!(path, "neck.widths"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn chaining_error_has_path() {
        let mut g = DetectorGenome::small_reconstruction();
        g.backbone[2].in_ch += 8;
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("backbone[2].in_ch"), "{err}");
    }

    #[test]
    fn missing_version_rejected() {
        let err = genome_from_json(r#"{"num_classes": 1}"#).unwrap_err();
        assert!(matches!(err, Error::Schema { ref path, .. } if path == "schema_version"));
    }

    #[test]
    fn repair_propagates_forward() {
        let mut g = DetectorGenome::small_reconstruction();
        g.backbone[1].out_ch += 16;
        g.repair_channels();
        g.validate().unwrap();
        assert_eq!(g.backbone[2].in_ch, g.backbone[1].out_ch);
    }
}
