use detkit::arch::{build_graph, genome_from_json, Act, DetectorGenome, FusionStyle, GraphBuilder, OpGraph, Section, Shape};
use detkit::cost::{cost_report_with_latency, count_flops, count_params, section_flops, CountOptions, DeviceProfile};
use detkit::nas::{apply_mutation, Mutation, SearchSpace};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OPTS: CountOptions = CountOptions { strict: false };

fn tiny_space() -> DetectorGenome {
    genome_from_json(include_str!("../genomes/tiny_space.json")).unwrap()
}

fn conv_flops(g: &OpGraph) -> u64 {
    g.nodes()
        .iter()
        .filter(|n| n.kind.label() == "conv")
        .map(|n| detkit::cost::node_flops(n, OPTS))
        .sum()
}

#[test]
fn halving_resolution_quarters_conv_flops() {
    let mut g = DetectorGenome::small_reconstruction();
    g.input_res = [640, 640];
    let big = conv_flops(&build_graph(&g).unwrap());
    g.input_res = [320, 320];
    let small = conv_flops(&build_graph(&g).unwrap());
    assert_eq!(big, 4 * small);
}

fn conv_chain(width: usize) -> OpGraph {
    let mut b = GraphBuilder::new();
    let x = b.input("x", Shape::new(width, 16, 16));
    let a = b.conv("a", x, 2 * width, 3, 1, 1, Act::Silu).unwrap();
    let c = b.conv("b", a, 3 * width, 1, 2, 1, Act::Silu).unwrap();
    let d = b.conv("c", c, width, 5, 1, 1, Act::Silu).unwrap();
    b.finish(vec![d], vec![]).unwrap()
}

#[test]
fn doubling_widths_quadruples_conv_flops() {
    for w in [1, 3, 8] {
        assert_eq!(count_flops(&conv_chain(2 * w), OPTS), 4 * count_flops(&conv_chain(w), OPTS));
    }
}

#[test]
fn s_reconstruction_within_calibration_band() {
    let g = build_graph(&DetectorGenome::small_reconstruction()).unwrap();
    let gflops = count_flops(&g, OPTS) as f64 / 1e9;
    let mparams = count_params(&g) as f64 / 1e6;
    assert!((gflops / 37.8 - 1.0).abs() <= 0.15, "{gflops} GFLOPs");
    assert!((mparams / 16.3 - 1.0).abs() <= 0.15, "{mparams} M params");
}

#[test]
fn t4_profile_places_s_near_four_ms() {
    let g = build_graph(&DetectorGenome::small_reconstruction()).unwrap();
    let r = cost_report_with_latency(&g, OPTS, &DeviceProfile::t4_like()).unwrap();
    assert!((r.latency_ms - 3.8).abs() < 0.2, "{}", r.latency_ms);
    r.check_consistency().unwrap();
}

fn with_neck(depth: usize, widths: [usize; 3], up: bool) -> DetectorGenome {
    let mut g = DetectorGenome::small_reconstruction();
    let neck = g.neck.as_mut().unwrap();
    neck.depth = depth;
    neck.widths = widths;
    neck.extra_upsample = up;
    g
}

fn neck_flops(g: &DetectorGenome) -> u64 {
    section_flops(&build_graph(g).unwrap(), Section::Neck, OPTS)
}

/// Rows of the neck depth/width ablation, listed by published total FLOPs.
const NECK_ROWS: [(usize, [usize; 3]); 5] = [
    (2, [192, 192, 192]),
    (2, [128, 256, 512]),
    (4, [64, 128, 256]),
    (3, [96, 192, 384]),
    (3, [160, 160, 160]),
];

#[test]
#[ignore = "published ranking contradicts width monotonicity: (2, 192/192/192) dominates (3, 96/192/384) at the two \
            finest scales, which hold 20/21 of the pixels, yet is listed as cheaper; see docs/design-notes.md"]
fn neck_rows_follow_published_flops_ranking() {
    let flops: Vec<u64> = NECK_ROWS.iter().map(|(d, w)| neck_flops(&with_neck(*d, *w, false))).collect();
    assert!(flops.windows(2).all(|p| p[0] < p[1]), "{flops:?}");
}

#[test]
fn neck_rows_are_monotone_in_depth_and_width() {
    for (d, w) in NECK_ROWS {
        let base = neck_flops(&with_neck(d, w, false));
        assert!(neck_flops(&with_neck(d + 1, w, false)) > base);
        for i in 0..3 {
            let mut wider = w;
            wider[i] += 8;
            assert!(neck_flops(&with_neck(d, wider, false)) > base, "row ({d}, {w:?}) widening scale {i}");
        }
    }
    for (a, b) in NECK_ROWS.iter().flat_map(|a| NECK_ROWS.iter().map(move |b| (a, b))) {
        let le = a.0 <= b.0 && (0..3).all(|i| a.1[i] <= b.1[i]);
        if le && a != b {
            assert!(neck_flops(&with_neck(a.0, a.1, false)) < neck_flops(&with_neck(b.0, b.1, false)));
        }
    }
}

#[test]
fn extra_upsample_strictly_adds_flops() {
    for (d, w) in NECK_ROWS {
        let off = count_flops(&build_graph(&with_neck(d, w, false)).unwrap(), OPTS);
        let on = count_flops(&build_graph(&with_neck(d, w, true)).unwrap(), OPTS);
        assert!(on > off);
    }
}

#[test]
fn fusion_styles_order_like_the_ablation() {
    let total = |style| {
        let mut g = DetectorGenome::small_reconstruction();
        g.neck.as_mut().unwrap().fusion_style = style;
        count_flops(&build_graph(&g).unwrap(), OPTS)
    };
    let conv = total(FusionStyle::Conv);
    let csp = total(FusionStyle::Csp);
    let rep = total(FusionStyle::CspReparam);
    let elan = total(FusionStyle::CspReparamElan);
    assert!(conv > csp);
    assert_eq!(csp, rep);
    assert!(elan > rep);
}

fn permuted(g: &OpGraph, seed: u64) -> OpGraph {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    g.reordered(&order).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn totals_invariant_under_reordering(seed in any::<u64>()) {
        let g = build_graph(&tiny_space()).unwrap();
        let p = permuted(&g, seed);
        prop_assert_eq!(count_flops(&g, OPTS), count_flops(&p, OPTS));
        prop_assert_eq!(count_flops(&g, CountOptions { strict: true }), count_flops(&p, CountOptions { strict: true }));
        prop_assert_eq!(count_params(&g), count_params(&p));
    }

    #[test]
    fn growing_never_shrinks_cost(
        block in 0usize..5,
        level in 0usize..3,
        which in 0usize..4,
        steps in 1usize..4,
    ) {
        let g = tiny_space();
        let space = SearchSpace { scale_rule: false, ..Default::default() };
        let m = match which {
            0 => Mutation::Width { block, delta: 8 * steps as isize },
            1 => Mutation::Depth { block, delta: steps as isize },
            2 => Mutation::NeckWidth { level, delta: 8 * steps as isize },
            _ => Mutation::NeckDepth { delta: steps as isize },
        };
        if let Some(grown) = apply_mutation(&g, m, &space) {
            let profile = DeviceProfile::x86_like();
            let a = cost_report_with_latency(&build_graph(&g).unwrap(), OPTS, &profile).unwrap();
            let b = cost_report_with_latency(&build_graph(&grown).unwrap(), OPTS, &profile).unwrap();
            prop_assert!(b.flops >= a.flops);
            prop_assert!(b.params >= a.params);
            prop_assert!(b.latency_ms >= a.latency_ms);
        }
    }
}
