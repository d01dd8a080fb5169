use std::path::PathBuf;

use detkit::arch::{
    build_graph, genome_from_json, genome_to_json, Act, BlockKind, BlockSpec, DetectorGenome, FusionStyle, HeadConfig,
    NeckConfig, OpKind, Section, Shape,
};
use detkit::Error;
use proptest::prelude::*;

fn stage_only(block: BlockSpec, res: usize) -> DetectorGenome {
    DetectorGenome {
        name: None,
        num_classes: 80,
        input_res: [res, res],
        backbone: vec![block],
        neck: None,
        head: None,
    }
}

fn tiny_space() -> DetectorGenome {
    genome_from_json(include_str!("../genomes/tiny_space.json")).unwrap()
}

/// Compares against `tests/golden/<name>.ndjson`; set DETKIT_BLESS=1 to rewrite.
fn check_golden(name: &str, genome: &DetectorGenome) {
    let text = build_graph(genome).unwrap().to_ndjson().unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.ndjson"));
    if std::env::var_os("DETKIT_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(golden == text, "lowering of {name} drifted from {}", path.display());
}

#[test]
fn single_conv_stage_is_one_node() {
    let g = stage_only(BlockSpec::new(BlockKind::ConvBnAct, 3, 16, 2, 1), 32);
    let graph = build_graph(&g).unwrap();
    assert_eq!(graph.op_count(), 1);
    let conv = graph.nodes().iter().find(|n| !n.is_input()).unwrap();
    assert_eq!(conv.out_shape, Shape::new(16, 16, 16));
    assert!(matches!(conv.kind, OpKind::Conv { kernel: 3, stride: 2, groups: 1, act: Act::Silu, .. }));
}

#[test]
fn res_stage_depth_two_matches_hand_lowering() {
    // repeat 0: 1x1 reduce, 3x3, 1x1 shortcut projection (16 != 32), add
    // repeat 1: 1x1 reduce, 3x3, add with identity shortcut
    let g = stage_only(BlockSpec::new(BlockKind::Res, 16, 32, 1, 2), 8);
    let graph = build_graph(&g).unwrap();
    let got: Vec<(String, &str, Shape)> = graph
        .nodes()
        .iter()
        .filter(|n| !n.is_input())
        .map(|n| (n.name.clone(), n.kind.label(), n.out_shape))
        .collect();
    let s = |c| Shape::new(c, 8, 8);
    let expected = vec![
        ("backbone.0.rep0.conv1".to_string(), "conv", s(16)),
        ("backbone.0.rep0.conv2".to_string(), "conv", s(32)),
        ("backbone.0.rep0.proj".to_string(), "conv", s(32)),
        ("backbone.0.rep0.add".to_string(), "add", s(32)),
        ("backbone.0.rep1.conv1".to_string(), "conv", s(16)),
        ("backbone.0.rep1.conv2".to_string(), "conv", s(32)),
        ("backbone.0.rep1.add".to_string(), "add", s(32)),
    ];
    assert_eq!(got, expected);
    assert_eq!(graph.op_count(), 3 * 2 + 1);
}

#[test]
fn golden_block_lowerings() {
    check_golden("single_conv", &stage_only(BlockSpec::new(BlockKind::ConvBnAct, 3, 16, 2, 1), 32));
    check_golden("res_depth2", &stage_only(BlockSpec::new(BlockKind::Res, 16, 32, 1, 2), 8));
    check_golden("res_stride2", &stage_only(BlockSpec::new(BlockKind::Res, 16, 32, 2, 2), 8));
    check_golden("csp_depth2", &stage_only(BlockSpec::new(BlockKind::Csp, 16, 32, 2, 2), 8));
    check_golden("mob_depth2", &stage_only(BlockSpec::new(BlockKind::Mob, 16, 16, 1, 2), 8));
    check_golden("focus", &stage_only(BlockSpec::new(BlockKind::Focus, 3, 16, 2, 1), 8));
    check_golden("spp", &stage_only(BlockSpec::new(BlockKind::Spp, 32, 32, 1, 1), 8));
    check_golden("tiny_space", &tiny_space());
}

#[test]
fn lowering_is_deterministic() {
    let g = DetectorGenome::small_reconstruction();
    assert_eq!(build_graph(&g).unwrap(), build_graph(&g).unwrap());
}

#[test]
fn zero_head_is_two_projections_per_scale() {
    let mut g = tiny_space();
    g.head = None;
    let without = build_graph(&g).unwrap();
    g.head = Some(HeadConfig::default());
    let with = build_graph(&g).unwrap();
    assert_eq!(with.op_count() - without.op_count(), 6);
    assert_eq!(with.count_in(Section::Head, "conv"), 6);
    assert_eq!(with.nodes().iter().filter(|n| n.section == Section::Head).count(), 6);
}

#[test]
fn s_genome_round_trips() {
    let g = DetectorGenome::small_reconstruction();
    let back = genome_from_json(&genome_to_json(&g).unwrap()).unwrap();
    assert_eq!(back, g);
}

#[test]
fn missing_neck_widths_is_named() {
    let mut v: serde_json::Value = serde_json::from_str(&genome_to_json(&DetectorGenome::small_reconstruction()).unwrap()).unwrap();
    v["neck"].as_object_mut().unwrap().remove("widths");
    match genome_from_json(&v.to_string()) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "neck.widths"),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn broken_chain_is_named() {
    let mut g = DetectorGenome::small_reconstruction();
    g.backbone[2].in_ch += 8;
    match g.validate() {
        Err(Error::Genome { path, .. }) => assert_eq!(path, "backbone[2].in_ch"),
        other => panic!("expected genome error, got {other:?}"),
    }
}

#[test]
fn hand_written_neck_row_parses() {
    let doc = r#"{
        "schema_version": 1,
        "num_classes": 80,
        "input_res": [640, 640],
        "backbone": [
            {"kind": "conv_bn_act", "in_ch": 3, "out_ch": 32, "stride": 2},
            {"kind": "res", "in_ch": 32, "out_ch": 64, "stride": 2},
            {"kind": "res", "in_ch": 64, "out_ch": 128, "stride": 2},
            {"kind": "res", "in_ch": 128, "out_ch": 256, "stride": 2},
            {"kind": "res", "in_ch": 256, "out_ch": 512, "stride": 2}
        ],
        "neck": {"depth": 3, "widths": [96, 192, 384]},
        "head": {}
    }"#;
    let g = genome_from_json(doc).unwrap();
    let neck = g.neck.as_ref().unwrap();
    assert_eq!((neck.depth, neck.widths), (3, [96, 192, 384]));
    assert_eq!(neck.fusion_style, FusionStyle::CspReparamElan);
    assert!(!neck.extra_upsample && neck.extra_downsample);
    let graph = build_graph(&g).unwrap();
    let outs: Vec<Shape> = graph.taps().iter().map(|t| graph.node(t.node).out_shape).collect();
    assert!(outs.contains(&Shape::new(96, 80, 80)));
}

#[test]
fn odd_dims_at_stride_two_fail() {
    let g = stage_only(BlockSpec::new(BlockKind::ConvBnAct, 3, 8, 2, 1), 33);
    let err = build_graph(&g).unwrap_err().to_string();
    assert!(err.contains("odd"), "{err}");
}

fn neck_genome(up: bool, down: bool, depth: usize, widths: [usize; 3]) -> DetectorGenome {
    let mut g = tiny_space();
    let mut n = NeckConfig::new(depth, widths);
    n.extra_upsample = up;
    n.extra_downsample = down;
    g.neck = Some(n);
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn removing_extra_upsample_drops_nodes_keeps_outputs(
        down: bool,
        depth in 1usize..4,
        w in prop::array::uniform3(1usize..8),
    ) {
        let widths = [w[0] * 8, w[1] * 8, w[2] * 8];
        let with = build_graph(&neck_genome(true, down, depth, widths)).unwrap();
        let without = build_graph(&neck_genome(false, down, depth, widths)).unwrap();
        prop_assert!(without.len() < with.len());
        let shapes = |g: &detkit::arch::OpGraph| g.outputs().iter().map(|o| g.node(*o).out_shape).collect::<Vec<_>>();
        prop_assert_eq!(shapes(&with), shapes(&without));
    }

    #[test]
    fn graphs_stay_shape_consistent(
        kinds in prop::collection::vec(prop::sample::select(vec![BlockKind::Res, BlockKind::Csp, BlockKind::Mob]), 4),
        depths in prop::collection::vec(1usize..3, 4),
        widths in prop::collection::vec(1usize..6, 4),
    ) {
        let mut g = tiny_space();
        for i in 0..4 {
            let b = &mut g.backbone[i + 1];
            b.kind = kinds[i];
            b.depth = depths[i];
            b.out_ch = widths[i] * 8;
        }
        g.repair_channels();
        g.validate().unwrap();
        let graph = build_graph(&g).unwrap();
        for n in graph.nodes() {
            for (src, s) in n.inputs.iter().zip(&n.in_shapes) {
                prop_assert_eq!(graph.node(*src).out_shape, *s);
            }
        }
    }
}
