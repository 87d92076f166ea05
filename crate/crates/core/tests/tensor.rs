#[path = "support/oracle.rs"]
mod oracle;

use proptest::prelude::*;
use terragan::ops::{conv2d, conv2d_transpose, down2_average, up2_nearest};
use terragan::{Init, Rng, Tensor};

use oracle::{adjoint_gap, conv2d_loops, conv2d_transpose_loops, exhaustive_sweep, random};

#[test]
fn every_small_geometry_matches_the_loop_oracles() {
    let sweep = exhaustive_sweep(11);
    assert!(sweep.cases > 10_000, "{sweep:?}");
    assert!(sweep.conv_max_error < 1e-6, "{sweep:?}");
    assert!(sweep.transpose_max_error < 1e-6, "{sweep:?}");
}

#[test]
fn transpose_is_the_adjoint_of_conv() {
    assert!(adjoint_gap(100, 5) < 1e-4);
}

#[test]
fn stride_two_transpose_scatter_example() {
    let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let k = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let b = Tensor::zeros(&[1]);
    let got = conv2d_transpose(&x, &k, Some(&b), 2, 0).unwrap();
    assert_eq!(got.shape(), &[1, 1, 4, 4]);
    assert_eq!(got, conv2d_transpose_loops(&x, &k, &b, 2, 0));
    assert_eq!(got.data()[0], 1.0);
    assert_eq!(got.data()[2], 2.0);
    assert_eq!(got.data()[10], 4.0);
}

#[test]
fn random_conv_example_within_oracle_tolerance() {
    let mut rng = Rng::new(21);
    let x = random::<f64>(&[1, 2, 5, 5], &mut rng);
    let k = random::<f64>(&[3, 2, 3, 3], &mut rng);
    let b = random::<f64>(&[3], &mut rng);
    let got = conv2d(&x, &k, Some(&b), 1, 0).unwrap();
    assert!(got.max_abs_diff(&conv2d_loops(&x, &k, &b, 1, 0)).unwrap() < 1e-6);
}

#[test]
fn single_precision_conv_tracks_the_oracle() {
    let mut rng = Rng::new(8);
    let x = random::<f64>(&[2, 4, 9, 9], &mut rng);
    let k = random::<f64>(&[3, 4, 3, 3], &mut rng);
    let b = random::<f64>(&[3], &mut rng);
    let got = conv2d(&x.cast::<f32>(), &k.cast::<f32>(), Some(&b.cast::<f32>()), 2, 1).unwrap();
    assert!(got.cast::<f64>().max_abs_diff(&conv2d_loops(&x, &k, &b, 2, 1)).unwrap() < 1e-5);
}

#[test]
fn normal_alloc_stream_statistics() {
    let t = Tensor::<f64>::alloc(&[10_000], Init::Normal { mean: 0.0, std: 1.0 }, &mut Rng::new(7)).unwrap();
    let n = t.len() as f64;
    let mean = t.data().iter().sum::<f64>() / n;
    let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    assert!(mean.abs() < 0.05, "{mean}");
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

fn shape4() -> impl Strategy<Value = Vec<usize>> {
    (1usize..3, 1usize..4, 1usize..6, 1usize..6).prop_map(|(b, c, h, w)| vec![b, c, h, w])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn down_after_up_is_identity(shape in shape4(), seed in any::<u64>()) {
        let x = random::<f32>(&shape, &mut Rng::new(seed));
        prop_assert_eq!(down2_average(&up2_nearest(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn alloc_is_bit_deterministic(shape in shape4(), seed in any::<u64>()) {
        let init = Init::Normal { mean: 0.0, std: 1.0 };
        let a = Tensor::<f32>::alloc(&shape, init, &mut Rng::new(seed)).unwrap();
        let b = Tensor::<f32>::alloc(&shape, init, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn conv_matches_oracle_on_random_geometry(
        shape in shape4(), cout in 1usize..4, k in 1usize..4, stride in 1usize..3, pad in 0usize..2,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= shape[2] + 2 * pad && k <= shape[3] + 2 * pad);
        let mut rng = Rng::new(seed);
        let x = random::<f64>(&shape, &mut rng);
        let kernel = random::<f64>(&[cout, shape[1], k, k], &mut rng);
        let b = random::<f64>(&[cout], &mut rng);
        let got = conv2d(&x, &kernel, Some(&b), stride, pad).unwrap();
        prop_assert!(got.all_finite());
        prop_assert!(got.max_abs_diff(&conv2d_loops(&x, &kernel, &b, stride, pad)).unwrap() < 1e-6);
    }
}
