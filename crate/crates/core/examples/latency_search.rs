//! Latency-budgeted evolutionary search over the tiny space.

use detkit::arch::genome_from_json;
use detkit::cost::DeviceProfile;
use detkit::nas::{search_with_progress, SearchConfig};

fn main() -> detkit::Result<()> {
    let seed = genome_from_json(include_str!("../genomes/tiny_space.json"))?;
    let budget = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let cfg = SearchConfig::new(16, 20, Some(budget), 7, DeviceProfile::x86_like());
    let out = search_with_progress(&seed, &cfg, |r| {
        println!(
            "gen {:>2}: best {:>9.1} at {:.3} ms, archive {}",
            r.generation, r.best_score, r.best_latency_ms, r.archive_size
        )
    })?;
    println!("pareto front ({} entries, budget {budget} ms):", out.archive.len());
    for c in out.archive.entries() {
        let widths: Vec<usize> = c.genome.backbone.iter().map(|b| b.out_ch).collect();
        println!("  {:.3} ms  score {:>9.1}  backbone widths {widths:?}", c.cost.latency_ms, c.score.value);
    }
    Ok(())
}
