//! FLOPs, params and modeled latency of the reconstructed T/S/M genomes.

use detkit::arch::{build_graph, DetectorGenome};
use detkit::cost::{cost_report_with_latency, CountOptions, DeviceProfile};

fn main() -> detkit::Result<()> {
    let profile = DeviceProfile::t4_like();
    for (name, g) in [
        ("T", DetectorGenome::tiny_reconstruction()),
        ("S", DetectorGenome::small_reconstruction()),
        ("M", DetectorGenome::medium_reconstruction()),
    ] {
        let r = cost_report_with_latency(&build_graph(&g)?, CountOptions::default(), &profile)?;
        println!(
            "{name}: {:>6.2} GFLOPs  {:>6.2} M params  {:>5.2} ms ({})",
            r.flops as f64 / 1e9,
            r.params as f64 / 1e6,
            r.latency_ms,
            profile.name
        );
    }
    // per-op breakdown for the smallest one
    let r = cost_report_with_latency(
        &build_graph(&DetectorGenome::tiny_reconstruction())?,
        CountOptions::default(),
        &profile,
    )?;
    print!("{}", r.to_table());
    Ok(())
}
