//! AlignOTA assignment on a toy image, next to the Sinkhorn and ATSS variants.

use detkit::assign::{AlignOta, Assigner, Atss, GroundTruth, Prediction, SinkhornOta};
use detkit::geometry::BBox;

fn pred(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Prediction {
    let b = BBox::new(x1, y1, x2, y2);
    let (cx, cy) = b.center();
    Prediction {
        bbox: b,
        cls_scores: vec![score, 1.0 - score],
        anchor_point: [cx, cy],
    }
}

fn main() -> detkit::Result<()> {
    let gts = [
        GroundTruth {
            bbox: BBox::new(10.0, 10.0, 50.0, 50.0),
            class_id: 0,
        },
        GroundTruth {
            bbox: BBox::new(40.0, 40.0, 90.0, 80.0),
            class_id: 0,
        },
    ];
    let preds = [
        pred(12.0, 10.0, 50.0, 48.0, 0.8),
        pred(8.0, 12.0, 45.0, 52.0, 0.6),
        pred(30.0, 30.0, 60.0, 60.0, 0.7),
        pred(42.0, 40.0, 88.0, 82.0, 0.9),
        pred(45.0, 45.0, 80.0, 75.0, 0.3),
        pred(150.0, 150.0, 170.0, 170.0, 0.9),
    ];
    let assigners: [(&str, &dyn Assigner); 3] = [
        ("align-ota", &AlignOta::default()),
        ("sinkhorn", &SinkhornOta::default()),
        ("atss", &Atss::default()),
    ];
    for (name, a) in assigners {
        let r = a.assign(&gts, &preds)?;
        println!("{name:<10} assigned {:?} k {:?}", r.assigned_gt, r.per_gt_k);
        let labels: Vec<String> = r.soft_labels.iter().map(|l| l.map_or("-".into(), |v| format!("{v:.2}"))).collect();
        println!("{:<10} soft     [{}]", "", labels.join(", "));
    }
    Ok(())
}
