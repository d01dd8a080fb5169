//! Neck FLOPs over a grid of depths and per-scale widths, with and without
//! the extra upsample links.

use detkit::arch::{build_graph, DetectorGenome, Section};
use detkit::cost::{count_flops, section_flops, CountOptions};

fn main() -> detkit::Result<()> {
    let opts = CountOptions::default();
    let rows = [
        (2, [192, 192, 192]),
        (2, [128, 256, 512]),
        (4, [64, 128, 256]),
        (3, [96, 192, 384]),
        (3, [160, 160, 160]),
    ];
    println!("depth  widths            neck GFLOPs  total GFLOPs  +upsample");
    for (depth, widths) in rows {
        let mut g = DetectorGenome::small_reconstruction();
        let neck = g.neck.as_mut().expect("reconstruction has a neck");
        neck.depth = depth;
        neck.widths = widths;
        let graph = build_graph(&g)?;
        let neck_f = section_flops(&graph, Section::Neck, opts);
        let total = count_flops(&graph, opts);
        g.neck.as_mut().unwrap().extra_upsample = true;
        let up = count_flops(&build_graph(&g)?, opts);
        println!(
            "{depth:>5}  {:<16}  {:>11.2}  {:>12.2}  {:>9.2}",
            format!("{widths:?}"),
            neck_f as f64 / 1e9,
            total as f64 / 1e9,
            up as f64 / 1e9
        );
    }
    Ok(())
}
