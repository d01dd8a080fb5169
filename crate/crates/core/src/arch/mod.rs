//! Architecture genomes, their lowering to operator graphs, and
//! re-parameterization folding.

pub mod genome;
pub mod graph;
pub mod lower;
pub mod reparam;

pub use genome::{
    genome_from_json, genome_to_json, BlockKind, BlockSpec, DetectorGenome, FusionStyle, HeadConfig, NeckConfig,
    GENOME_SCHEMA_VERSION,
};
pub use graph::{Act, GraphBuilder, Node, OpGraph, OpKind, Section, Shape, Tap};
pub use lower::{build_graph, build_graph_with, BuildOptions, RepMode};
pub use reparam::{reparam_fold, ConvBn, RepBranchParams};
