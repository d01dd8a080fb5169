//! Fold a 3x3 + 1x1 + identity block into one 3x3 conv and compare outputs.

use detkit::arch::{reparam_fold, ConvBn, RepBranchParams};
use detkit::tensor::{conv2d_forward, BnParams, ConvParams, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv_bn(rng: &mut ChaCha8Rng, c: usize, k: usize) -> ConvBn {
    let mut conv = ConvParams::zeros(c, c, k, 1, 1);
    conv.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
    ConvBn { conv, bn: bn(rng, c) }
}

fn bn(rng: &mut ChaCha8Rng, c: usize) -> BnParams {
    BnParams {
        gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: (0..c).map(|_| rng.gen_range(-0.2..0.2)).collect(),
        running_mean: (0..c).map(|_| rng.gen_range(-0.2..0.2)).collect(),
        running_var: (0..c).map(|_| rng.gen_range(0.5..2.0)).collect(),
        epsilon: 1e-5,
    }
}

fn main() -> detkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = 8;
    let block = RepBranchParams {
        conv3: conv_bn(&mut rng, c, 3),
        conv1: {
            let mut cb = conv_bn(&mut rng, c, 1);
            cb.conv.padding = 0;
            cb
        },
        identity_bn: Some(bn(&mut rng, c)),
    };
    let folded = reparam_fold(&block)?;
    let x = Tensor4::from_fn([2, c, 16, 16], |_, _, _, _| rng.gen_range(-1.0..1.0))?;
    let gap = conv2d_forward(&x, &folded)?.max_abs_diff(&block.forward_branches(&x)?)?;
    println!("folded into one {}x{} conv, {} weights", folded.kh, folded.kw, folded.weights.len());
    println!("max |folded - branched| = {gap:.3e}");
    Ok(())
}
