//! Training-free entropy proxy.
//!
//! A per-channel activation variance is pushed through the graph in closed
//! form, assuming fan-in-scaled random weights and inference-mode BN at
//! initialization:
//!
//! * conv: each output channel gets the mean variance of the input channels
//!   in its group (so uniform variance passes through unchanged);
//! * add: variances of the summed branches add;
//! * concat: channel variances are carried side by side;
//! * batch norm, pooling, upsampling, space-to-depth: unchanged.
//!
//! A tap with `h·w` positions then contributes `Σ_c h·w · ½·ln(2πe·v_c)`,
//! the differential entropy of a Gaussian of that variance per element.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::arch::{OpGraph, OpKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleScore {
    pub tap: String,
    pub elements: u64,
    pub mean_variance: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub value: f64,
    pub per_scale: Vec<ScaleScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    /// Variance of every input channel.
    pub input_variance: f64,
    /// Per-tap weights by tap name; taps not listed weigh 1.
    pub tap_weights: BTreeMap<String, f64>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            input_variance: 1.0,
            tap_weights: BTreeMap::new(),
        }
    }
}

/// Anything that ranks an untrained graph; higher is better.
pub trait Proxy: Sync {
    fn score(&self, graph: &OpGraph) -> Result<ProxyScore>;
}

#[derive(Debug, Clone, Default)]
pub struct EntropyProxy {
    pub config: ProxyConfig,
}

impl Proxy for EntropyProxy {
    fn score(&self, graph: &OpGraph) -> Result<ProxyScore> {
        entropy_score_with(graph, &self.config)
    }
}

/// Entropy score with unit input variance and unit tap weights.
pub fn entropy_score(graph: &OpGraph) -> Result<ProxyScore> {
    entropy_score_with(graph, &ProxyConfig::default())
}

pub fn entropy_score_with(graph: &OpGraph, config: &ProxyConfig) -> Result<ProxyScore> {
    let variances = propagate_variance(graph, config.input_variance)?;
    let taps: Vec<(String, usize)> = if graph.taps().is_empty() {
        graph
            .outputs()
            .iter()
            .enumerate()
            .map(|(i, n)| (format!("output{i}"), *n))
            .collect()
    } else {
        graph.taps().iter().map(|t| (t.name.clone(), t.node)).collect()
    };
    let mut per_scale = Vec::with_capacity(taps.len());
    for (name, node) in taps {
        let shape = graph.node(node).out_shape;
        let elements = shape.elements();
        if elements == 0 {
            return Err(Error::Graph {
                node,
                msg: "scored feature map has no elements".into(),
            });
        }
        let v = &variances[node];
        let positions = (shape.h * shape.w) as f64;
        let entropy: f64 = v.iter().map(|vc| positions * 0.5 * (2.0 * PI * E * vc).ln()).sum();
        let weight = config.tap_weights.get(&name).copied().unwrap_or(1.0);
        per_scale.push(ScaleScore {
            mean_variance: v.iter().sum::<f64>() / v.len() as f64,
            tap: name,
            elements,
            contribution: weight * entropy,
        });
    }
    Ok(ProxyScore {
        value: per_scale.iter().map(|s| s.contribution).sum(),
        per_scale,
    })
}

/// Per-channel variance at every node output, indexed by node id.
pub fn propagate_variance(graph: &OpGraph, input_variance: f64) -> Result<Vec<Vec<f64>>> {
    let mut var: Vec<Vec<f64>> = vec![Vec::new(); graph.len()];
    for id in graph.topo_order()? {
        let node = graph.node(id);
        let out_c = node.out_shape.c;
        let v = match node.kind {
            OpKind::Input => vec![input_variance; out_c],
            OpKind::Conv { groups, .. } => {
                let input = &var[node.inputs[0]];
                let ipg = input.len() / groups;
                let opg = out_c / groups;
                (0..out_c)
                    .map(|o| {
                        let g = o / opg;
                        input[g * ipg..(g + 1) * ipg].iter().sum::<f64>() / ipg as f64
                    })
                    .collect()
            }
            OpKind::Add { .. } => {
                let mut acc = vec![0.0; out_c];
                for src in &node.inputs {
                    for (a, v) in acc.iter_mut().zip(&var[*src]) {
                        *a += v;
                    }
                }
                acc
            }
            OpKind::Concat => node.inputs.iter().flat_map(|s| var[*s].iter().copied()).collect(),
            OpKind::SpaceToDepth => {
                let input = &var[node.inputs[0]];
                (0..4).flat_map(|_| input.iter().copied()).collect()
            }
            OpKind::BatchNorm | OpKind::Upsample { .. } | OpKind::MaxPool { .. } => var[node.inputs[0]].clone(),
        };
        if v.len() != out_c {
            return Err(Error::Invariant(format!("variance width {} != channels {out_c} at node {id}", v.len())));
        }
        var[id] = v;
    }
    Ok(var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Act, GraphBuilder, Shape, Tap};

    fn half_log_2pie() -> f64 {
        0.5 * (2.0 * PI * E).ln()
    }

    #[test]
    fn identity_graph_closed_form() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(64, 20, 20));
        let g = b.finish(vec![x], vec![Tap { name: "x".into(), node: x }]).unwrap();
        let s = entropy_score(&g).unwrap();
        let expected = 64.0 * 400.0 * half_log_2pie();
        assert!((s.value - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn conv_preserves_and_add_doubles() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(8, 4, 4));
        let c = b.conv("c", x, 8, 3, 1, 1, Act::Silu).unwrap();
        let only_conv = b.finish(vec![c], vec![Tap { name: "t".into(), node: c }]).unwrap();

        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(8, 4, 4));
        let c = b.conv("c", x, 8, 3, 1, 1, Act::Silu).unwrap();
        let a = b.add("a", vec![c, x], Act::Identity).unwrap();
        let with_add = b.finish(vec![a], vec![Tap { name: "t".into(), node: a }]).unwrap();

        let elements = 8.0 * 16.0;
        let s0 = entropy_score(&only_conv).unwrap().value;
        assert!((s0 - elements * half_log_2pie()).abs() < 1e-9);
        let s1 = entropy_score(&with_add).unwrap().value;
        assert!((s1 - s0 - elements * 0.5 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn concat_keeps_parts_and_conv_averages() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(2, 2, 2));
        let a = b.add("a", vec![x, x], Act::Identity).unwrap();
        let cat = b.concat("cat", vec![x, a]).unwrap();
        let c = b.conv("c", cat, 3, 1, 1, 1, Act::Identity).unwrap();
        let g = b.finish(vec![c], vec![]).unwrap();
        let v = propagate_variance(&g, 1.0).unwrap();
        assert_eq!(v[cat], vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(v[c], vec![1.5, 1.5, 1.5]);
    }

    #[test]
    fn tap_weights_scale_contributions() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(1, 2, 2));
        let g = b.finish(vec![x], vec![Tap { name: "x".into(), node: x }]).unwrap();
        let mut cfg = ProxyConfig::default();
        cfg.tap_weights.insert("x".into(), 2.0);
        let base = entropy_score(&g).unwrap().value;
        assert!((entropy_score_with(&g, &cfg).unwrap().value - 2.0 * base).abs() < 1e-12);
    }
}
