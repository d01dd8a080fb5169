//! Operator DAG with resolved shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample feature shape; batch is implicitly 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn elements(&self) -> u64 {
        (self.c * self.h * self.w) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Act {
    Identity,
    Relu,
    Silu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Input,
    Backbone,
    Neck,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpKind {
    Input,
    /// Odd `kernel`, "same" padding (`kernel / 2`). `bias` covers a folded BN.
    Conv {
        kernel: usize,
        stride: usize,
        groups: usize,
        bias: bool,
        act: Act,
    },
    BatchNorm,
    Add { act: Act },
    Concat,
    /// Nearest-neighbour upsampling.
    Upsample { factor: usize },
    /// Stride-1 max pooling with "same" padding.
    MaxPool { kernel: usize },
    /// 2x2 space-to-depth (Focus slicing).
    SpaceToDepth,
}

impl OpKind {
    pub fn label(&self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Conv { .. } => "conv",
            OpKind::BatchNorm => "batch_norm",
            OpKind::Add { .. } => "add",
            OpKind::Concat => "concat",
            OpKind::Upsample { .. } => "upsample",
            OpKind::MaxPool { .. } => "max_pool",
            OpKind::SpaceToDepth => "space_to_depth",
        }
    }

    pub fn act(&self) -> Option<Act> {
        match self {
            OpKind::Conv { act, .. } | OpKind::Add { act } => Some(*act),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub name: String,
    pub section: Section,
    #[serde(flatten)]
    pub kind: OpKind,
    pub inputs: Vec<usize>,
    pub in_shapes: Vec<Shape>,
    pub out_shape: Shape,
}

impl Node {
    pub fn is_input(&self) -> bool {
        matches!(self.kind, OpKind::Input)
    }
}

/// A named feature map the entropy proxy reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tap {
    pub name: String,
    pub node: usize,
}

/// Lowered network. Node ids are `0..len`; storage order is any topological
/// or non-topological permutation, use [`OpGraph::topo_order`] to walk it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpGraph {
    nodes: Vec<Node>,
    outputs: Vec<usize>,
    taps: Vec<Tap>,
    #[serde(skip)]
    position: Vec<usize>,
}

impl OpGraph {
    /// Validates ids, acyclicity and every node's shape contract.
    pub fn from_parts(nodes: Vec<Node>, outputs: Vec<usize>, taps: Vec<Tap>) -> Result<Self> {
        let n = nodes.len();
        let mut position = vec![usize::MAX; n];
        for (pos, node) in nodes.iter().enumerate() {
            if node.id >= n || position[node.id] != usize::MAX {
                return Err(Error::Graph {
                    node: node.id,
                    msg: "node ids must be a permutation of 0..len".into(),
                });
            }
            position[node.id] = pos;
        }
        let graph = Self {
            nodes,
            outputs,
            taps,
            position,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[self.position[id]]
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes excluding graph inputs.
    pub fn op_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_input()).count()
    }

    pub fn count_kind(&self, label: &str) -> usize {
        self.nodes.iter().filter(|n| n.kind.label() == label).count()
    }

    pub fn count_in(&self, section: Section, label: &str) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.section == section && n.kind.label() == label)
            .count()
    }

    /// Same graph with nodes stored in `order` (a permutation of ids).
    pub fn reordered(&self, order: &[usize]) -> Result<OpGraph> {
        if order.len() != self.nodes.len() {
            return Err(Error::param("reorder", "order must list every node once"));
        }
        let nodes = order
            .iter()
            .map(|id| {
                self.position
                    .get(*id)
                    .map(|p| self.nodes[*p].clone())
                    .ok_or_else(|| Error::param("reorder", format!("unknown node id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        OpGraph::from_parts(nodes, self.outputs.clone(), self.taps.clone())
    }

    /// Kahn order, ties broken by smallest id so the walk is deterministic.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut consumers = vec![Vec::new(); n];
        for node in &self.nodes {
            for &src in &node.inputs {
                indegree[node.id] += 1;
                consumers[src].push(node.id);
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
            (0..n).filter(|i| indegree[*i] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(id)) = ready.pop() {
            order.push(id);
            for &c in &consumers[id] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(std::cmp::Reverse(c));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|i| indegree[*i] > 0).unwrap_or(0);
            return Err(Error::Graph {
                node: stuck,
                msg: "graph contains a cycle".into(),
            });
        }
        Ok(order)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for node in &self.nodes {
            let err = |msg: String| Error::Graph { node: node.id, msg };
            if node.inputs.len() != node.in_shapes.len() {
                return Err(err("inputs and in_shapes differ in length".into()));
            }
            for (src, shape) in node.inputs.iter().zip(&node.in_shapes) {
                if *src >= n {
                    return Err(err(format!("input {src} does not exist")));
                }
                let produced = self.node(*src).out_shape;
                if produced != *shape {
                    return Err(err(format!("input shape {shape:?} does not match producer {src} output {produced:?}")));
                }
            }
            check_node_shapes(node).map_err(err)?;
        }
        for id in self.outputs.iter().chain(self.taps.iter().map(|t| &t.node)) {
            if *id >= n {
                return Err(Error::Graph {
                    node: *id,
                    msg: "output or tap refers to a missing node".into(),
                });
            }
        }
        self.topo_order()?;
        Ok(())
    }

    /// One JSON object per node, in id order.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for id in 0..self.nodes.len() {
            out.push_str(&serde_json::to_string(self.node(id))?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_node_shapes(node: &Node) -> std::result::Result<(), String> {
    let ins = &node.in_shapes;
    let out = node.out_shape;
    let arity = |want: usize| {
        if ins.len() == want {
            Ok(())
        } else {
            Err(format!("{} expects {want} input(s), got {}", node.kind.label(), ins.len()))
        }
    };
    if out.c == 0 || out.h == 0 || out.w == 0 {
        return Err("output shape has a zero dimension".into());
    }
    match node.kind {
        OpKind::Input => arity(0),
        OpKind::Conv {
            kernel,
            stride,
            groups,
            ..
        } => {
            arity(1)?;
            let i = ins[0];
            if kernel % 2 == 0 || stride == 0 || groups == 0 {
                return Err("conv needs odd kernel and positive stride/groups".into());
            }
            if i.c % groups != 0 || out.c % groups != 0 {
                return Err(format!("channels {} -> {} not divisible by groups {groups}", i.c, out.c));
            }
            let pad = kernel / 2;
            let expect = |size: usize| (size + 2 * pad - kernel) / stride + 1;
            if expect(i.h) != out.h || expect(i.w) != out.w {
                return Err(format!("conv output {out:?} inconsistent with input {i:?}"));
            }
            Ok(())
        }
        OpKind::BatchNorm | OpKind::MaxPool { .. } => {
            arity(1)?;
            if ins[0] != out {
                return Err("shape-preserving op changed its shape".into());
            }
            Ok(())
        }
        OpKind::Add { .. } => {
            if ins.len() < 2 {
                return Err("add needs at least two inputs".into());
            }
            if ins.iter().any(|s| *s != out) {
                return Err("add inputs must all equal the output shape".into());
            }
            Ok(())
        }
        OpKind::Concat => {
            if ins.is_empty() {
                return Err("concat needs inputs".into());
            }
            if ins.iter().any(|s| s.h != out.h || s.w != out.w) {
                return Err("concat inputs differ spatially".into());
            }
            if ins.iter().map(|s| s.c).sum::<usize>() != out.c {
                return Err("concat output channels are not the sum of its inputs".into());
            }
            Ok(())
        }
        OpKind::Upsample { factor } => {
            arity(1)?;
            let i = ins[0];
            if out != Shape::new(i.c, i.h * factor, i.w * factor) {
                return Err("upsample output inconsistent".into());
            }
            Ok(())
        }
        OpKind::SpaceToDepth => {
            arity(1)?;
            let i = ins[0];
            if i.h % 2 != 0 || i.w % 2 != 0 || out != Shape::new(i.c * 4, i.h / 2, i.w / 2) {
                return Err("space_to_depth needs even spatial dims".into());
            }
            Ok(())
        }
    }
}

/// Incremental graph construction with shape inference.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    section: Option<Section>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_section(&mut self, section: Section) {
        self.section = Some(section);
    }

    pub fn shape(&self, id: usize) -> Shape {
        self.nodes[id].out_shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, name: impl Into<String>, kind: OpKind, inputs: Vec<usize>, out_shape: Shape) -> usize {
        let id = self.nodes.len();
        let in_shapes = inputs.iter().map(|i| self.nodes[*i].out_shape).collect();
        let section = match kind {
            OpKind::Input => Section::Input,
            _ => self.section.unwrap_or(Section::Backbone),
        };
        self.nodes.push(Node {
            id,
            name: name.into(),
            section,
            kind,
            inputs,
            in_shapes,
            out_shape,
        });
        id
    }

    fn fail(&self, name: &str, msg: impl Into<String>) -> Error {
        Error::Graph {
            node: self.nodes.len(),
            msg: format!("{name}: {}", msg.into()),
        }
    }

    pub fn input(&mut self, name: impl Into<String>, shape: Shape) -> usize {
        self.push(name, OpKind::Input, vec![], shape)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        name: impl Into<String>,
        input: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        act: Act,
    ) -> Result<usize> {
        let name = name.into();
        let i = self.shape(input);
        if out_ch == 0 {
            return Err(self.fail(&name, "out_ch must be >= 1"));
        }
        if kernel % 2 == 0 {
            return Err(self.fail(&name, format!("kernel {kernel} is even")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(self.fail(&name, format!("stride {stride} not in {{1, 2}}")));
        }
        if stride == 2 && (i.h % 2 != 0 || i.w % 2 != 0) {
            return Err(self.fail(&name, format!("odd spatial dim {}x{} at stride 2", i.h, i.w)));
        }
        if groups == 0 || i.c % groups != 0 || out_ch % groups != 0 {
            return Err(self.fail(&name, format!("channels {} -> {out_ch} not divisible by groups {groups}", i.c)));
        }
        let out = Shape::new(out_ch, i.h / stride, i.w / stride);
        let kind = OpKind::Conv {
            kernel,
            stride,
            groups,
            bias: true,
            act,
        };
        Ok(self.push(name, kind, vec![input], out))
    }

    pub fn batch_norm(&mut self, name: impl Into<String>, input: usize) -> usize {
        let s = self.shape(input);
        self.push(name, OpKind::BatchNorm, vec![input], s)
    }

    pub fn add(&mut self, name: impl Into<String>, inputs: Vec<usize>, act: Act) -> Result<usize> {
        let name = name.into();
        let first = self.shape(inputs[0]);
        if inputs.len() < 2 || inputs.iter().any(|i| self.shape(*i) != first) {
            return Err(self.fail(&name, "add needs >= 2 inputs of identical shape"));
        }
        Ok(self.push(name, OpKind::Add { act }, inputs, first))
    }

    pub fn concat(&mut self, name: impl Into<String>, inputs: Vec<usize>) -> Result<usize> {
        let name = name.into();
        let first = self.shape(inputs[0]);
        let mut c = 0;
        for i in &inputs {
            let s = self.shape(*i);
            if s.h != first.h || s.w != first.w {
                return Err(self.fail(&name, format!("spatial mismatch {}x{} vs {}x{}", s.h, s.w, first.h, first.w)));
            }
            c += s.c;
        }
        Ok(self.push(name, OpKind::Concat, inputs, Shape::new(c, first.h, first.w)))
    }

    pub fn upsample(&mut self, name: impl Into<String>, input: usize, factor: usize) -> usize {
        let s = self.shape(input);
        self.push(
            name,
            OpKind::Upsample { factor },
            vec![input],
            Shape::new(s.c, s.h * factor, s.w * factor),
        )
    }

    pub fn max_pool(&mut self, name: impl Into<String>, input: usize, kernel: usize) -> usize {
        let s = self.shape(input);
        self.push(name, OpKind::MaxPool { kernel }, vec![input], s)
    }

    pub fn space_to_depth(&mut self, name: impl Into<String>, input: usize) -> Result<usize> {
        let name = name.into();
        let s = self.shape(input);
        if s.h % 2 != 0 || s.w % 2 != 0 {
            return Err(self.fail(&name, format!("odd spatial dim {}x{} at stride 2", s.h, s.w)));
        }
        Ok(self.push(name, OpKind::SpaceToDepth, vec![input], Shape::new(s.c * 4, s.h / 2, s.w / 2)))
    }

    pub fn finish(self, outputs: Vec<usize>, taps: Vec<Tap>) -> Result<OpGraph> {
        OpGraph::from_parts(self.nodes, outputs, taps)
    }
}
