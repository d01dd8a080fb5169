//! Exact FLOP/parameter counting over an [`OpGraph`] and a roofline-style
//! latency model.
//!
//! Conventions: a multiply-accumulate is 2 FLOPs. Bias adds, activations and
//! batch norm are free unless [`CountOptions::strict`] is set. Add, concat,
//! upsample, pooling and space-to-depth cost their output element count
//! (an n-input add costs `n - 1` per element). Bytes moved are `4 ×` (input
//! elements + output elements + parameters).

mod profile;

pub use profile::DeviceProfile;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::arch::{Act, Node, OpGraph, OpKind, Section};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CountOptions {
    /// Also charge activations (1/element) and batch norm (2/element).
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub id: usize,
    pub name: String,
    pub op: String,
    pub section: Section,
    pub flops: u64,
    pub params: u64,
    pub bytes: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops: u64,
    pub params: u64,
    pub latency_ms: f64,
    pub per_node: Vec<NodeCost>,
}

pub fn node_flops(node: &Node, opts: CountOptions) -> u64 {
    let out = node.out_shape.elements();
    match node.kind {
        OpKind::Input => 0,
        OpKind::Conv {
            kernel, groups, act, ..
        } => {
            let cin = node.in_shapes[0].c as u64;
            let macs = (kernel * kernel) as u64 * (cin / groups as u64) * out;
            let act_cost = if opts.strict && act != Act::Identity { out } else { 0 };
            2 * macs + act_cost
        }
        OpKind::BatchNorm => {
            if opts.strict {
                2 * out
            } else {
                0
            }
        }
        OpKind::Add { act } => {
            let adds = (node.inputs.len() as u64 - 1) * out;
            adds + if opts.strict && act != Act::Identity { out } else { 0 }
        }
        OpKind::Concat | OpKind::Upsample { .. } | OpKind::MaxPool { .. } | OpKind::SpaceToDepth => out,
    }
}

pub fn node_params(node: &Node) -> u64 {
    match node.kind {
        OpKind::Conv {
            kernel, groups, bias, ..
        } => {
            let cin = node.in_shapes[0].c as u64;
            let cout = node.out_shape.c as u64;
            (kernel * kernel) as u64 * (cin / groups as u64) * cout + if bias { cout } else { 0 }
        }
        OpKind::BatchNorm => 2 * node.out_shape.c as u64,
        _ => 0,
    }
}

pub fn node_bytes(node: &Node) -> u64 {
    if node.is_input() {
        return 0;
    }
    let inputs: u64 = node.in_shapes.iter().map(|s| s.elements()).sum();
    4 * (inputs + node.out_shape.elements() + node_params(node))
}

pub fn count_flops(graph: &OpGraph, opts: CountOptions) -> u64 {
    graph.nodes().iter().map(|n| node_flops(n, opts)).sum()
}

pub fn count_params(graph: &OpGraph) -> u64 {
    graph.nodes().iter().map(node_params).sum()
}

/// FLOPs restricted to one section of the network.
pub fn section_flops(graph: &OpGraph, section: Section, opts: CountOptions) -> u64 {
    graph
        .nodes()
        .iter()
        .filter(|n| n.section == section)
        .map(|n| node_flops(n, opts))
        .sum()
}

/// Per-node FLOPs/params/bytes in id order; latency fields are zero.
pub fn cost_report(graph: &OpGraph, opts: CountOptions) -> CostReport {
    let per_node: Vec<NodeCost> = (0..graph.len())
        .map(|id| {
            let n = graph.node(id);
            NodeCost {
                id,
                name: n.name.clone(),
                op: n.kind.label().to_string(),
                section: n.section,
                flops: node_flops(n, opts),
                params: node_params(n),
                bytes: node_bytes(n),
                latency_ms: 0.0,
            }
        })
        .collect();
    CostReport {
        flops: per_node.iter().map(|n| n.flops).sum(),
        params: per_node.iter().map(|n| n.params).sum(),
        latency_ms: 0.0,
        per_node,
    }
}

fn node_latency(node: &NodeCost, profile: &DeviceProfile) -> f64 {
    if node.op == "input" {
        return 0.0;
    }
    let compute = node.flops as f64 / profile.flops_per_ms;
    let memory = node.bytes as f64 / profile.bytes_per_ms;
    compute.max(memory) + profile.per_op_overhead_ms
}

/// Σ max(flops/rate, bytes/bandwidth) + per-op overhead, over non-input nodes.
pub fn estimate_latency(report: &CostReport, profile: &DeviceProfile) -> f64 {
    report.per_node.iter().map(|n| node_latency(n, profile)).sum()
}

/// Report with per-node and total modeled latency filled in.
pub fn cost_report_with_latency(graph: &OpGraph, opts: CountOptions, profile: &DeviceProfile) -> Result<CostReport> {
    profile.validate()?;
    let mut report = cost_report(graph, opts);
    for n in &mut report.per_node {
        n.latency_ms = node_latency(n, profile);
    }
    report.latency_ms = report.per_node.iter().map(|n| n.latency_ms).sum();
    Ok(report)
}

impl CostReport {
    /// Checks totals against the per-node table.
    pub fn check_consistency(&self) -> Result<()> {
        let flops: u64 = self.per_node.iter().map(|n| n.flops).sum();
        let params: u64 = self.per_node.iter().map(|n| n.params).sum();
        let latency: f64 = self.per_node.iter().map(|n| n.latency_ms).sum();
        if flops != self.flops || params != self.params {
            return Err(Error::Invariant("cost totals differ from per-node sums".into()));
        }
        if (latency - self.latency_ms).abs() > 1e-9 * latency.abs().max(1.0) {
            return Err(Error::Invariant("latency total differs from per-node sum".into()));
        }
        if self.per_node.iter().any(|n| n.latency_ms < 0.0) || self.latency_ms < 0.0 {
            return Err(Error::Invariant("negative latency".into()));
        }
        Ok(())
    }

    /// Aligned plain-text table with a totals row.
    pub fn to_table(&self) -> String {
        let name_w = self.per_node.iter().map(|n| n.name.len()).max().unwrap_or(4).max(4);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5}  {:<name_w$}  {:<14}  {:>16}  {:>12}  {:>12}",
            "id", "name", "op", "flops", "params", "latency_ms"
        );
        for n in &self.per_node {
            let _ = writeln!(
                s,
                "{:>5}  {:<name_w$}  {:<14}  {:>16}  {:>12}  {:>12.6}",
                n.id, n.name, n.op, n.flops, n.params, n.latency_ms
            );
        }
        let _ = writeln!(
            s,
            "{:>5}  {:<name_w$}  {:<14}  {:>16}  {:>12}  {:>12.6}",
            "", "total", "", self.flops, self.params, self.latency_ms
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{GraphBuilder, Shape};

    fn conv_graph(cin: usize, cout: usize, k: usize, hw: usize) -> OpGraph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(cin, hw, hw));
        let c = b.conv("c", x, cout, k, 1, 1, Act::Silu).unwrap();
        b.finish(vec![c], vec![]).unwrap()
    }

    #[test]
    fn three_by_three_64_channels() {
        let g = conv_graph(64, 64, 3, 32);
        assert_eq!(count_flops(&g, CountOptions::default()), 75_497_472);
        assert_eq!(count_params(&g), 36_928);
    }

    #[test]
    fn unit_conv() {
        let g = conv_graph(1, 1, 1, 1);
        assert_eq!(count_flops(&g, CountOptions::default()), 2);
    }

    #[test]
    fn zero_out_channels_disallowed() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(1, 1, 1));
        assert!(b.conv("c", x, 0, 1, 1, 1, Act::Identity).is_err());
    }

    #[test]
    fn strict_mode_charges_activations() {
        let g = conv_graph(1, 1, 1, 4);
        assert_eq!(count_flops(&g, CountOptions { strict: true }), 2 * 16 + 16);
    }

    #[test]
    fn concat_and_input_have_no_params() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", Shape::new(2, 4, 4));
        let c = b.concat("cat", vec![x, x]).unwrap();
        let g = b.finish(vec![c], vec![]).unwrap();
        assert_eq!(count_params(&g), 0);
        assert_eq!(count_flops(&g, CountOptions::default()), 64);
    }

    #[test]
    fn latency_edge_cases() {
        let profile = DeviceProfile {
            name: "unit".into(),
            flops_per_ms: 1000.0,
            bytes_per_ms: 1e30,
            per_op_overhead_ms: 0.0,
        };
        let empty = CostReport {
            flops: 0,
            params: 0,
            latency_ms: 0.0,
            per_node: vec![],
        };
        assert_eq!(estimate_latency(&empty, &profile), 0.0);
        let node = NodeCost {
            id: 0,
            name: "n".into(),
            op: "conv".into(),
            section: Section::Backbone,
            flops: 1000,
            params: 0,
            bytes: 1,
            latency_ms: 0.0,
        };
        let one = CostReport {
            flops: 1000,
            params: 0,
            latency_ms: 0.0,
            per_node: vec![node.clone()],
        };
        assert_eq!(estimate_latency(&one, &profile), 1.0);
        let two = CostReport {
            per_node: vec![node.clone(), NodeCost { id: 1, ..node }],
            ..one.clone()
        };
        assert_eq!(estimate_latency(&two, &profile), 2.0 * estimate_latency(&one, &profile));
    }

    #[test]
    fn table_has_totals_row() {
        let g = conv_graph(4, 4, 3, 8);
        let r = cost_report_with_latency(&g, CountOptions::default(), &DeviceProfile::t4_like()).unwrap();
        r.check_consistency().unwrap();
        let table = r.to_table();
        assert!(table.lines().last().unwrap().contains("total"));
        assert_eq!(table.lines().count(), g.len() + 2);
    }
}
