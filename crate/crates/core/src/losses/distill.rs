//! Feature distillation: the student-to-teacher align module, channel-wise
//! distillation with per-channel temperature, and two reference baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{channel_stats, conv2d_forward, ConvParams, Tensor4};

/// Lower bound on the per-channel temperature.
pub const STD_FLOOR: f64 = 1e-3;

/// Projects student features to the teacher's `(C, H, W)`: a 1×1 conv for
/// channels, then a nearest resize if the spatial size still differs.
pub fn align_project(student: &Tensor4, teacher_dims: [usize; 4], proj: &ConvParams) -> Result<Tensor4> {
    const OP: &str = "align_project";
    if proj.kh != 1 || proj.kw != 1 || proj.stride != 1 || proj.padding != 0 {
        return Err(Error::param(OP, "projection must be a 1x1, stride-1, unpadded conv"));
    }
    if student.batch() != teacher_dims[0] {
        return Err(Error::Shape {
            op: OP,
            dim: "batch",
            expected: teacher_dims[0],
            found: student.batch(),
        });
    }
    if proj.out_ch != teacher_dims[1] {
        return Err(Error::Shape {
            op: OP,
            dim: "channels",
            expected: teacher_dims[1],
            found: proj.out_ch,
        });
    }
    let projected = conv2d_forward(student, proj)?;
    if projected.height() == teacher_dims[2] && projected.width() == teacher_dims[3] {
        Ok(projected)
    } else {
        projected.resize_nearest(teacher_dims[2], teacher_dims[3])
    }
}

/// Log-softmax of `values / t` over one plane.
fn log_softmax(values: &[f32], t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|v| *v as f64 / t).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scaled.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    scaled.iter().map(|v| v - lse).collect()
}

/// Per-channel temperatures: the teacher's channel std after mean removal,
/// floored at [`STD_FLOOR`].
pub fn channel_temperatures(teacher: &Tensor4) -> Vec<f64> {
    channel_stats(teacher).iter().map(|s| s.std.max(STD_FLOOR)).collect()
}

/// Channel-wise distillation. For every `(n, c)` plane both features are
/// softmaxed over space at temperature `T_c`; the loss is the mean over
/// planes of `T_c² · KL(teacher ‖ student)`. Mean removal does not change a
/// softmax, so only the temperature depends on it.
pub fn cwd_loss(teacher: &Tensor4, student: &Tensor4) -> Result<f64> {
    teacher.check_same_dims("cwd_loss", student)?;
    let temps = channel_temperatures(teacher);
    let [n, c, _, _] = teacher.dims();
    let mut total = 0.0;
    for b in 0..n {
        for (ch, &t) in temps.iter().enumerate() {
            let lt = log_softmax(teacher.plane(b, ch), t);
            let ls = log_softmax(student.plane(b, ch), t);
            let kl: f64 = lt.iter().zip(&ls).map(|(a, s)| a.exp() * (a - s)).sum();
            total += t * t * kl.max(0.0);
        }
    }
    Ok(total / (n * c) as f64)
}

/// A feature-imitation loss between aligned teacher and student maps.
pub trait FeatureDistiller: Sync {
    fn name(&self) -> &'static str;
    fn loss(&self, teacher: &Tensor4, student: &Tensor4) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Cwd;

impl FeatureDistiller for Cwd {
    fn name(&self) -> &'static str {
        "cwd"
    }

    fn loss(&self, teacher: &Tensor4, student: &Tensor4) -> Result<f64> {
        cwd_loss(teacher, student)
    }
}

/// Plain feature mimicking: mean squared error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mimic;

fn mse(a: &Tensor4, b: &Tensor4) -> f64 {
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    sum / a.data().len() as f64
}

impl FeatureDistiller for Mimic {
    fn name(&self) -> &'static str {
        "mimic"
    }

    fn loss(&self, teacher: &Tensor4, student: &Tensor4) -> Result<f64> {
        teacher.check_same_dims("mimic", student)?;
        Ok(mse(teacher, student))
    }
}

/// Masked generative distillation: random spatial positions of the student
/// are zeroed, a conv-relu-conv generator reconstructs the teacher from the
/// masked map, and the loss is the MSE to the teacher.
#[derive(Debug, Clone)]
pub struct Mgd {
    pub mask_ratio: f64,
    pub seed: u64,
    pub generator: (ConvParams, ConvParams),
}

impl Mgd {
    /// Generator weights drawn from a seeded He-uniform initialization.
    pub fn new(channels: usize, mask_ratio: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = |rng: &mut ChaCha8Rng| {
            let mut p = ConvParams::zeros(channels, channels, 3, 1, 1);
            let bound = (6.0 / (channels * 9) as f64).sqrt() as f32;
            for w in &mut p.weights {
                *w = rng.gen_range(-bound..bound);
            }
            p
        };
        let first = layer(&mut rng);
        let second = layer(&mut rng);
        Self {
            mask_ratio,
            seed,
            generator: (first, second),
        }
    }
}

impl FeatureDistiller for Mgd {
    fn name(&self) -> &'static str {
        "mgd"
    }

    fn loss(&self, teacher: &Tensor4, student: &Tensor4) -> Result<f64> {
        teacher.check_same_dims("mgd", student)?;
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::param("mgd", format!("mask ratio {} not in [0, 1)", self.mask_ratio)));
        }
        let [n, _, h, w] = student.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x006d_6764);
        let keep: Vec<bool> = (0..n * h * w).map(|_| rng.gen::<f64>() >= self.mask_ratio).collect();
        let masked = Tensor4::from_fn(student.dims(), |b, c, y, x| {
            if keep[(b * h + y) * w + x] {
                student.at(b, c, y, x)
            } else {
                0.0
            }
        })?;
        let hidden = conv2d_forward(&masked, &self.generator.0)?;
        let hidden = Tensor4::new(hidden.dims(), hidden.data().iter().map(|v| v.max(0.0)).collect())?;
        let generated = conv2d_forward(&hidden, &self.generator.1)?;
        Ok(mse(teacher, &generated))
    }
}

/// Weighted sum of a distiller over several (teacher, student) levels;
/// without weights every level counts `1 / levels`.
pub fn multi_scale_distill(distiller: &dyn FeatureDistiller, levels: &[(Tensor4, Tensor4)], weights: Option<&[f64]>) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::param("multi_scale_distill", "no feature levels given"));
    }
    let equal = vec![1.0 / levels.len() as f64; levels.len()];
    let weights = weights.unwrap_or(&equal);
    if weights.len() != levels.len() {
        return Err(Error::param(
            "multi_scale_distill",
            format!("{} weights for {} levels", weights.len(), levels.len()),
        ));
    }
    let losses: Vec<f64> = crate::parallel::install(|| {
        levels
            .par_iter()
            .map(|(t, s)| distiller.loss(t, s))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}
