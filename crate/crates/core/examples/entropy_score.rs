//! Training-free entropy score of a genome, per scored feature map.

use detkit::arch::{build_graph, genome_from_json, DetectorGenome};
use detkit::nas::entropy_score;

fn main() -> detkit::Result<()> {
    let tiny = genome_from_json(include_str!("../genomes/tiny_space.json"))?;
    for (name, g) in [("tiny space", tiny), ("S reconstruction", DetectorGenome::small_reconstruction())] {
        let s = entropy_score(&build_graph(&g)?)?;
        println!("{name}: {:.1}", s.value);
        for p in &s.per_scale {
            println!("  {:<14} {:>9} elems  var {:>7.3}  {:>12.1}", p.tap, p.elements, p.mean_variance, p.contribution);
        }
    }
    Ok(())
}
