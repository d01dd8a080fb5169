//! QFL, DFL and GIoU on a few hand-picked inputs, and the weighted total.

use detkit::geometry::BBox;
use detkit::losses::{dfl, giou_loss, qfl, total_loss, LossComponents, LossWeights};

fn main() -> detkit::Result<()> {
    for (p, q) in [(0.5, 1.0), (0.9, 0.9), (0.2, 0.7)] {
        println!("qfl(p={p}, q={q}) = {:.6}", qfl(p, q, 2.0));
    }
    for probs in [[0.5, 0.5, 0.0], [0.7, 0.3, 0.0], [0.4, 0.4, 0.2]] {
        println!("dfl({probs:?}, y=0.5) = {:.6}", dfl(&probs, 0.5)?);
    }
    let gt = BBox::new(1.0, 1.0, 3.0, 3.0);
    for p in [BBox::new(0.0, 0.0, 2.0, 2.0), BBox::new(1.0, 1.0, 3.0, 3.0), BBox::new(5.0, 5.0, 6.0, 6.0)] {
        println!("giou_loss({p:?}) = {:.6}", giou_loss(&p, &gt));
    }
    let c = LossComponents {
        qfl: 0.2,
        dfl: 0.4,
        giou: 0.3,
    };
    println!("total with default weights = {:.6}", total_loss(&c, &LossWeights::default())?);
    Ok(())
}
