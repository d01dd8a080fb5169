mod common;

use common::{naive_conv, random_bn, random_conv, random_tensor};
use detkit::tensor::{batchnorm_forward, channel_stats, conv2d_forward, fold_batchnorm, Tensor4};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&mut rng, [1, 4, 8, 8]);
    let p = random_conv(&mut rng, 4, 8, 3, 1, 1);
    let gap = conv2d_forward(&x, &p).unwrap().max_abs_diff(&naive_conv(&x, &p)).unwrap();
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn conv_matches_naive_loop_strided_and_grouped() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (groups, stride) in [(2, 2), (4, 1), (1, 2)] {
        let x = random_tensor(&mut rng, [2, 4, 7, 6]);
        let p = random_conv(&mut rng, 4, 8, 3, stride, groups);
        let gap = conv2d_forward(&x, &p).unwrap().max_abs_diff(&naive_conv(&x, &p)).unwrap();
        assert!(gap < 1e-6, "groups {groups} stride {stride}: gap {gap}");
    }
}

#[test]
fn fold_batchnorm_matches_composition_on_100_seeds() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_conv(&mut rng, 3, 5, 3, 1, 1);
        let bn = random_bn(&mut rng, 5);
        let x = random_tensor(&mut rng, [1, 3, 6, 6]);
        let composed = batchnorm_forward(&conv2d_forward(&x, &p).unwrap(), &bn).unwrap();
        let folded = conv2d_forward(&x, &fold_batchnorm(&p, &bn).unwrap()).unwrap();
        worst = worst.max(folded.max_abs_diff(&composed).unwrap());
    }
    assert!(worst < 1e-5, "worst gap {worst}");
}

#[test]
fn conv_rejects_channel_mismatch() {
    let x = Tensor4::zeros([1, 3, 4, 4]).unwrap();
    let p = detkit::tensor::ConvParams::zeros(4, 2, 3, 1, 1);
    let err = conv2d_forward(&x, &p).unwrap_err().to_string();
    assert!(err.contains("channels"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear_without_bias(seed in any::<u64>(), a in -2.0f32..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_conv(&mut rng, 2, 3, 3, 1, 1);
        p.bias.iter_mut().for_each(|b| *b = 0.0);
        let x = random_tensor(&mut rng, [1, 2, 5, 5]);
        let y = random_tensor(&mut rng, [1, 2, 5, 5]);
        let mix = Tensor4::new(x.dims(), x.data().iter().zip(y.data()).map(|(u, v)| a * u + v).collect()).unwrap();
        let lhs = conv2d_forward(&mix, &p).unwrap();
        let cx = conv2d_forward(&x, &p).unwrap();
        let cy = conv2d_forward(&y, &p).unwrap();
        let rhs = Tensor4::new(cx.dims(), cx.data().iter().zip(cy.data()).map(|(u, v)| a * u + v).collect()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-4);
    }

    #[test]
    fn standardized_channels_have_zero_mean_unit_std(seed in any::<u64>(), shift in -5.0f32..5.0, scale in 0.1f32..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, [2, 3, 4, 5]);
        let moved = Tensor4::new(x.dims(), x.data().iter().map(|v| v * scale + shift).collect()).unwrap();
        let stats = channel_stats(&moved);
        let standardized = Tensor4::from_fn(moved.dims(), |n, c, y, xx| {
            ((moved.at(n, c, y, xx) as f64 - stats[c].mean) / stats[c].std) as f32
        }).unwrap();
        for s in channel_stats(&standardized) {
            prop_assert!(s.mean.abs() < 1e-4);
            prop_assert!((s.std - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn output_dims_follow_floor_rule(h in 1usize..12, w in 1usize..12, k in prop::sample::select(vec![1usize, 3, 5]), stride in 1usize..3, pad in 0usize..3) {
        let mut p = detkit::tensor::ConvParams::zeros(1, 1, k, stride, 1);
        p.padding = pad;
        let x = Tensor4::zeros([1, 1, h, w]).unwrap();
        match conv2d_forward(&x, &p) {
            Ok(y) => {
                prop_assert_eq!(y.height(), (h + 2 * pad - k) / stride + 1);
                prop_assert_eq!(y.width(), (w + 2 * pad - k) / stride + 1);
            }
            Err(_) => prop_assert!(h + 2 * pad < k || w + 2 * pad < k),
        }
    }
}
