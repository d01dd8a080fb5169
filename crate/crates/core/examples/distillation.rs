//! Channel-wise distillation against the MSE and masked-generation baselines,
//! weighted by the two-stage schedule.

use detkit::losses::{align_project, distill_weight, Cwd, DistillSchedule, FeatureDistiller, Mgd, Mimic};
use detkit::tensor::{ConvParams, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> detkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let teacher = Tensor4::from_fn([2, 8, 10, 10], |_, c, y, x| ((c + y * x) as f32 * 0.1).sin() * 2.0)?;
    // student has fewer channels; a 1x1 projection lifts it to the teacher's
    let student = Tensor4::from_fn([2, 4, 10, 10], |_, _, _, _| rng.gen_range(-1.0..1.0))?;
    let mut proj = ConvParams::zeros(4, 8, 1, 1, 1);
    proj.padding = 0;
    proj.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
    let aligned = align_project(&student, teacher.dims(), &proj)?;

    let mgd = Mgd::new(8, 0.65, 3);
    let methods: [&dyn FeatureDistiller; 3] = [&Cwd, &Mimic, &mgd];
    for d in methods {
        println!("{:<6} {:.6}", d.name(), d.loss(&teacher, &aligned)?);
    }
    let s = DistillSchedule::default();
    for e in [0.0, 71.0, 142.0, 213.0, 283.0, 284.0, 299.0] {
        println!("epoch {e:>5}: weight {:.4}", distill_weight(e, &s));
    }
    Ok(())
}
